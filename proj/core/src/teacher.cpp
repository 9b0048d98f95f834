#include "xlenc/teacher.hpp"

#include <cmath>
#include <map>

#include "xlenc/random.hpp"
#include "xlenc/vocab.hpp"

namespace xlenc::encoder {

FileTeacher::FileTeacher(EmbeddingTable table) : table_(std::move(table)) {
  for (std::size_t i = 0; i < table_.size(); ++i) index_.emplace(table_.sentences[i], i);  // first wins
}

FileTeacher FileTeacher::load(const std::filesystem::path& path) { return FileTeacher(read_embedding_file(path)); }

std::vector<float> FileTeacher::embed(std::string_view normalized_sentence) const {
  const auto it = index_.find(std::string(normalized_sentence));
  if (it == index_.end()) throw TeacherMissError(std::string(normalized_sentence));
  return table_.vectors[it->second];
}

std::vector<double> SyntheticTeacher::token_vector(std::string_view token) const {
  Rng rng(derive_seed(seed_, token));
  std::vector<double> r(dim_);
  for (auto& x : r) x = rng.uniform(-1.0, 1.0);
  return r;
}

std::vector<float> SyntheticTeacher::embed(std::string_view normalized_sentence) const {
  std::map<std::string, std::size_t> counts;  // sorted, so the sum order is fixed
  for (auto& tok : preprocess::split_tokens(normalized_sentence)) ++counts[std::move(tok)];
  if (counts.empty()) counts[""] = 1;

  std::vector<double> sum(dim_, 0.0);
  for (const auto& [tok, count] : counts) {
    const auto r = token_vector(tok);
    for (std::size_t k = 0; k < dim_; ++k) sum[k] += static_cast<double>(count) * r[k];
  }
  double norm = 0.0;
  for (double x : sum) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<float> out(dim_);
  for (std::size_t k = 0; k < dim_; ++k) out[k] = static_cast<float>(norm > 0 ? sum[k] / norm : 0.0);
  return out;
}

}  // namespace xlenc::encoder
