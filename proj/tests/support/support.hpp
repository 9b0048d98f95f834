#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xlenc/corpus.hpp"
#include "xlenc/encoder.hpp"
#include "xlenc/random.hpp"
#include "xlenc/tensor.hpp"

namespace xlenc::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

Matrix<double> random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0);

/// Matrix with small integer entries, so exact ties and parallel rows occur.
Matrix<double> integer_matrix(std::size_t rows, std::size_t cols, Rng& rng, int lo, int hi);

/// Full n x n similarity matrix, explicit arg-max set per row: row i counts
/// when i is among the maximizers.
double oracle_match_accuracy(const Matrix<double>& english, const Matrix<double>& translated, bool en_to_t);

/// Mean over every ordered within-class pair (i != j) of the dot product of
/// unit vectors, weighted by class size over contributing classes.
double oracle_weighted_avg_cosine(const Matrix<double>& embeddings, std::span<const std::string> labels);

preprocess::TokenizedSequence random_sequence(std::size_t vocab_size, std::size_t max_len, Rng& rng);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;         // "tensor[index]"
  std::size_t entries = 0;
  std::size_t failures = 0;  // entries above the tolerance
};

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

inline constexpr double kGradCheckStep = 1e-4;
inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares backward() with central finite differences of
/// f = sum_ij G_ij * forward(params)_ij for every parameter entry. Parameters
/// start from init_params and are then jittered so biases and gains are
/// generic.
GradCheckResult check_encoder_gradients(const encoder::EncoderConfig& config, std::uint64_t seed,
                                        std::size_t batch = 3);

/// Pairs in `lang`/`dataset` with generated sentences; singletons appear with
/// probability `p_singleton`.
std::vector<corpus::ParallelPair> random_pairs(std::size_t n, Rng& rng, double p_singleton,
                                               std::size_t n_groups);

/// Pushes one randomized corpus through parse, filter_singletons,
/// cap_per_source and shard_training_files and checks every corpus rule
/// against independent recomputation. Returns the first violation, or "".
std::string corpus_property_violation(std::uint64_t seed, const std::filesystem::path& scratch);

/// Random printable-and-not text for normalizer fuzzing: ASCII, URL and
/// mention fragments, entities, whitespace, combining marks, emoji, and the
/// occasional invalid byte.
std::string random_fuzz_text(Rng& rng);

struct GoldenCase {
  std::string step;
  std::string input;
  std::string expected;
};

/// Normalizer golden file: one JSON object per line with "step", "expected"
/// and either "input" or hex-encoded "input_hex".
std::vector<GoldenCase> load_golden_cases(const std::filesystem::path& path);

}  // namespace xlenc::testing
