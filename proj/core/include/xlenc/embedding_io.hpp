#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace xlenc {

/// Sentences with one float vector each.
///
/// File layout: a header line `{"dim":D,"count":N}\n`, then N records of
///   u32 little-endian byte length, UTF-8 sentence bytes,
///   D IEEE-754 binary32 little-endian values.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> sentences;
  std::vector<std::vector<float>> vectors;

  std::size_t size() const { return sentences.size(); }
  void add(std::string sentence, std::vector<float> vector);
  bool operator==(const EmbeddingTable&) const = default;
};

void write_embedding_file(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embedding_file(const std::filesystem::path& path);

}  // namespace xlenc
