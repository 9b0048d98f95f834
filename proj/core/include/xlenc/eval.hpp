#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlenc/corpus.hpp"
#include "xlenc/embedding_io.hpp"
#include "xlenc/error.hpp"
#include "xlenc/student.hpp"
#include "xlenc/tensor.hpp"

namespace xlenc::eval {

class DegenerateEmbeddingError : public DataError {
 public:
  using DataError::DataError;
};

/// u.v / (|u| |v|), accumulated in double and clamped to [-1, 1].
template <class T>
double cosine(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) throw ContractError("cosine: length mismatch");
  double dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) throw DegenerateEmbeddingError("cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  return cosine<double>(std::span<const double>(u), std::span<const double>(v));
}

struct LabelledExample {
  std::string text;
  std::string label;
};

std::vector<LabelledExample> read_labelled_file(const std::filesystem::path& path);

struct ClassScore {
  std::string label;
  std::size_t size = 0;          // members in the dataset
  std::size_t evaluated = 0;     // members used (< size when subsampled)
  double mean_similarity = 0.0;  // mean cosine over unordered pairs
  double weight = 0.0;
};

/// Class-size-weighted mean of within-class pairwise cosine similarity.
struct EncodingReport {
  double d_avg = 0.0;
  std::vector<ClassScore> classes;            // contributing classes, label order
  std::vector<std::string> excluded_singletons;
  std::size_t n_examples = 0;
  std::size_t subsample_limit = 0;
  std::uint64_t subsample_seed = 0;

  nlohmann::json to_json() const;
  static EncodingReport from_json(const nlohmann::json& j);
};

inline constexpr const char* kPairConvention = "unordered pairs i<j within a class, self-pairs excluded";
inline constexpr std::size_t kDefaultSubsampleLimit = 20000;

/// Classes with one member are excluded and listed. Classes larger than
/// `subsample_limit` are evaluated on a seeded uniform subsample. Throws
/// DataError when no class has two members.
template <class T>
EncodingReport weighted_avg_cosine(const Matrix<T>& embeddings, std::span<const std::string> labels,
                                   std::size_t subsample_limit = kDefaultSubsampleLimit,
                                   std::uint64_t seed = 0);

enum class Direction { kEnToT, kTToEn };

struct MatchOutcome {
  std::size_t correct = 0;
  std::size_t ties = 0;  // correct decisions where another candidate scored equally
  std::size_t n = 0;
  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
};

/// en->t: pair i is correct iff cos(E_i, T_i) >= cos(E_i, T_j) for every
/// j != i; t->en swaps the roles. Ties count as correct.
template <class T>
MatchOutcome match_outcome(const Matrix<T>& english, const Matrix<T>& translated, Direction direction);

template <class T>
double match_accuracy(const Matrix<T>& english, const Matrix<T>& translated, Direction direction) {
  return match_outcome(english, translated, direction).accuracy();
}

struct MatchReport {
  double en_t_accuracy = 0.0;
  double t_en_accuracy = 0.0;
  double average = 0.0;
  std::size_t n_pairs = 0;
  std::size_t en_t_ties = 0;
  std::size_t t_en_ties = 0;

  /// More than 1% of the 2n decisions were ties.
  bool tie_warning() const;
  nlohmann::json to_json() const;
  static MatchReport from_json(const nlohmann::json& j);
};

MatchReport make_match_report(const MatchOutcome& en_t, const MatchOutcome& t_en);

template <class T>
MatchReport match_report(const Matrix<T>& english, const Matrix<T>& translated) {
  return make_match_report(match_outcome(english, translated, Direction::kEnToT),
                           match_outcome(english, translated, Direction::kTToEn));
}

MatchReport run_matching_eval(const encoder::Student& student,
                              std::span<const corpus::ParallelPair> testset);

EncodingReport run_encoding_eval(const encoder::Student& student,
                                 std::span<const LabelledExample> dataset,
                                 std::size_t subsample_limit = kDefaultSubsampleLimit,
                                 std::uint64_t seed = 0);

struct Neighbor {
  std::size_t index = 0;
  std::string sentence;
  double similarity = 0.0;
};

/// Exact top-k by cosine, descending, ties in index order. k larger than the
/// index returns the full ranking.
std::vector<Neighbor> knn(std::span<const float> query, const EmbeddingTable& index, std::size_t k);
std::vector<Neighbor> knn(const std::string& query, const encoder::Student& student,
                          const EmbeddingTable& index, std::size_t k);

/// Multi-model, multi-language matching results laid out like a results
/// table: one row per language, one (en-t, t-en, avg) column group per model.
struct MatchingTable {
  std::vector<std::string> models;
  std::vector<std::string> languages;
  std::map<std::string, std::vector<MatchReport>> rows;  // language -> per model

  /// Index of the best average per language; several when they tie.
  std::vector<std::size_t> best_models(const std::string& language) const;
  nlohmann::json to_json() const;
  static MatchingTable from_json(const nlohmann::json& j);
  /// Aligned plain text. The best average of each row is marked with '*'
  /// (bold when `color`), and '=' marks a best score shared by several
  /// models (underlined when `color`).
  std::string to_text(bool color) const;
};

std::string encoding_report_text(const EncodingReport& report);

}  // namespace xlenc::eval
