#include "xlenc/embedding_io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "xlenc/error.hpp"

namespace xlenc {

void EmbeddingTable::add(std::string sentence, std::vector<float> vector) {
  if (vector.size() != dim) throw ContractError("embedding table: vector length differs from dim");
  sentences.push_back(std::move(sentence));
  vectors.push_back(std::move(vector));
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingTable& table) {
  nlohmann::ordered_json header;
  header["dim"] = table.dim;
  header["count"] = table.size();
  std::string out = header.dump() + "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& s = table.sentences[i];
    if (table.vectors[i].size() != table.dim) throw ContractError("embedding table: ragged vectors");
    detail::put_le(out, static_cast<std::uint32_t>(s.size()));
    out += s;
    detail::put_f32s(out, table.vectors[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write embedding file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

EmbeddingTable read_embedding_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open embedding file " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();

  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw DataError(path.string() + ": missing embedding header line");
  const auto header = nlohmann::json::parse(bytes.substr(0, newline), nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("dim") || !header.contains("count") ||
      !header["dim"].is_number_unsigned() || !header["count"].is_number_unsigned()) {
    throw DataError(path.string() + ": embedding header must be {\"dim\":D,\"count\":N}");
  }
  EmbeddingTable table;
  table.dim = header["dim"].get<std::size_t>();
  const auto count = header["count"].get<std::size_t>();

  detail::Reader r(std::string_view(bytes).substr(newline + 1));
  auto truncated = [&](std::size_t i) {
    return DataError(path.string() + ": truncated at record " + std::to_string(i) + " of " + std::to_string(count));
  };
  for (std::size_t i = 0; i < count; ++i) {
    if (!r.has(4)) throw truncated(i);
    const auto len = r.le<std::uint32_t>();
    if (!r.has(len + 4 * table.dim)) throw truncated(i);
    std::string sentence(r.take(len));
    std::vector<float> v(table.dim);
    for (auto& x : v) x = r.f32();
    table.sentences.push_back(std::move(sentence));
    table.vectors.push_back(std::move(v));
  }
  if (r.remaining() != 0) throw DataError(path.string() + ": trailing bytes after " + std::to_string(count) + " records");
  return table;
}

}  // namespace xlenc
