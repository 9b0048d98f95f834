#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xlenc/embedding_io.hpp"
#include "xlenc/error.hpp"

namespace xlenc::encoder {

class TeacherMissError : public DataError {
 public:
  explicit TeacherMissError(const std::string& sentence)
      : DataError("teacher has no embedding for sentence: \"" + sentence + "\""), sentence_(sentence) {}
  const std::string& sentence() const { return sentence_; }

 private:
  std::string sentence_;
};

/// Frozen sentence -> vector mapping that defines the target space.
class TeacherOracle {
 public:
  virtual ~TeacherOracle() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<float> embed(std::string_view normalized_sentence) const = 0;
};

/// Lookup table read from a teacher embedding file.
class FileTeacher final : public TeacherOracle {
 public:
  explicit FileTeacher(EmbeddingTable table);
  static FileTeacher load(const std::filesystem::path& path);

  std::size_t dim() const override { return table_.dim; }
  std::vector<float> embed(std::string_view normalized_sentence) const override;

 private:
  EmbeddingTable table_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Hash-projection teacher: every distinct token t gets a fixed vector r_t
/// with entries uniform on [-1, 1] drawn from derive_seed(seed, t); a
/// sentence maps to the L2-normalized sum of count(t) * r_t over its token
/// multiset. A sentence without tokens uses the vector of the empty token.
class SyntheticTeacher final : public TeacherOracle {
 public:
  SyntheticTeacher(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

  std::size_t dim() const override { return dim_; }
  std::vector<float> embed(std::string_view normalized_sentence) const override;

  std::vector<double> token_vector(std::string_view token) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

}  // namespace xlenc::encoder
