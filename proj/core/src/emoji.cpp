#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xlenc/error.hpp"
#include "xlenc/normalize.hpp"

namespace xlenc::preprocess {

namespace {

struct BundledEntry {
  char32_t codepoint;
  const char* name;
};

constexpr BundledEntry kBundled[] = {
#include "emoji_table.inc"
};

std::u32string parse_codepoints(const std::string& key) {
  std::u32string seq;
  std::istringstream in(key);
  std::string hex;
  while (in >> hex) {
    std::size_t used = 0;
    unsigned long cp = 0;
    try {
      cp = std::stoul(hex, &used, 16);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != hex.size() || cp > 0x10FFFF) throw DataError("emoji table: bad codepoint \"" + hex + "\"");
    seq.push_back(static_cast<char32_t>(cp));
  }
  if (seq.empty()) throw DataError("emoji table: empty key");
  return seq;
}

}  // namespace

const EmojiTable& EmojiTable::bundled() {
  static const EmojiTable table = [] {
    EmojiTable t;
    for (const auto& e : kBundled) t.add(std::u32string(1, e.codepoint), e.name);
    return t;
  }();
  return table;
}

EmojiTable EmojiTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open emoji table " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("emoji table is not a JSON object: " + path.string());
  EmojiTable table;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string() || value.get<std::string>().empty()) {
      throw DataError("emoji table: name for " + key + " must be a non-empty string");
    }
    table.add(parse_codepoints(key), value.get<std::string>());
  }
  return table;
}

void EmojiTable::add(std::u32string sequence, std::string name) {
  max_len_ = std::max(max_len_, sequence.size());
  names_.insert_or_assign(std::move(sequence), std::move(name));
}

const std::string* EmojiTable::match(std::u32string_view text, std::size_t pos, std::size_t& matched) const {
  const std::size_t longest = std::min(max_len_, text.size() - pos);
  for (std::size_t len = longest; len >= 1; --len) {
    const auto it = names_.find(text.substr(pos, len));
    if (it != names_.end()) {
      matched = len;
      return &it->second;
    }
  }
  matched = 0;
  return nullptr;
}

}  // namespace xlenc::preprocess
