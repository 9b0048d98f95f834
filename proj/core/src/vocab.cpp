#include "xlenc/vocab.hpp"

#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xlenc/digest.hpp"
#include "xlenc/error.hpp"
#include "xlenc/normalize.hpp"

namespace xlenc::preprocess {

namespace {

const std::array<std::string, kSpecialCount>& special_tokens() {
  static const std::array<std::string, kSpecialCount> specials = {
      std::string(kPadToken), std::string(kUnkToken), std::string(kUrlToken), std::string(kMentionToken)};
  return specials;
}

bool is_separate_symbol(char32_t c) {
  const auto cp = static_cast<UChar32>(c);
  if (u_ispunct(cp)) return true;
  switch (u_charType(cp)) {
    case U_MATH_SYMBOL:
    case U_CURRENCY_SYMBOL:
    case U_MODIFIER_SYMBOL:
    case U_OTHER_SYMBOL:
      return true;
    default:
      return false;
  }
}

bool is_single_char_word(char32_t c) {
  const auto cp = static_cast<UChar32>(c);
  if (u_hasBinaryProperty(cp, UCHAR_IDEOGRAPHIC)) return true;
  UErrorCode status = U_ZERO_ERROR;
  const UScriptCode script = uscript_getScript(cp, &status);
  return U_SUCCESS(status) && (script == USCRIPT_HIRAGANA || script == USCRIPT_KATAKANA);
}

std::string lowercase(std::u32string_view word) {
  icu::UnicodeString u =
      icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(word.data()), static_cast<int32_t>(word.size()));
  u.toLower(icu::Locale::getRoot());
  std::string out;
  u.toUTF8String(out);
  return out;
}

bool is_reserved(std::string_view token) {
  const auto& specials = special_tokens();
  return std::find(specials.begin(), specials.end(), token) != specials.end();
}

}  // namespace

std::vector<std::string> split_tokens(std::string_view normalized) {
  static const std::u32string url = utf8_to_u32(kUrlToken);
  static const std::u32string mention = utf8_to_u32(kMentionToken);

  const std::u32string text = utf8_to_u32(normalized);
  std::vector<std::string> tokens;
  std::u32string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(lowercase(word));
    word.clear();
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t c = text[i];
    if (word.empty()) {
      const std::u32string_view rest(text.data() + i, text.size() - i);
      if (rest.starts_with(url) || rest.starts_with(mention)) {
        const bool is_url = rest.starts_with(url);
        tokens.emplace_back(is_url ? kUrlToken : kMentionToken);
        i += is_url ? url.size() : mention.size();
        continue;
      }
    }
    if (is_unicode_space(c) || u_iscntrl(static_cast<UChar32>(c))) {
      flush();
    } else if (is_separate_symbol(c) || is_single_char_word(c)) {
      flush();
      tokens.push_back(lowercase(std::u32string_view(&text[i], 1)));
    } else {
      word.push_back(c);
    }
    ++i;
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  const auto& specials = special_tokens();
  id_to_token_.assign(specials.begin(), specials.end());
  id_to_token_.insert(id_to_token_.end(), std::make_move_iterator(tokens.begin()),
                      std::make_move_iterator(tokens.end()));
  token_to_id_.reserve(id_to_token_.size());
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    if (id_to_token_[i].empty()) throw ContractError("vocabulary token must be non-empty");
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<std::int32_t>(i)).second) {
      throw ContractError("duplicate vocabulary token \"" + id_to_token_[i] + "\"");
    }
  }
}

std::int32_t Vocabulary::id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.contains(std::string(token)); }

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ContractError("vocabulary id out of range: " + std::to_string(id));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::to_json_string() const {
  nlohmann::ordered_json j;
  j["specials"] = std::vector<std::string>(id_to_token_.begin(), id_to_token_.begin() + kSpecialCount);
  j["tokens"] = std::vector<std::string>(id_to_token_.begin() + kSpecialCount, id_to_token_.end());
  return j.dump(1) + "\n";
}

Vocabulary Vocabulary::from_json_string(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("specials") || !j.contains("tokens")) {
    throw DataError("vocabulary JSON must be an object with \"specials\" and \"tokens\"");
  }
  std::vector<std::string> specials, tokens;
  try {
    specials = j.at("specials").get<std::vector<std::string>>();
    tokens = j.at("tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("vocabulary JSON: ") + e.what());
  }
  if (!std::equal(specials.begin(), specials.end(), special_tokens().begin(), special_tokens().end())) {
    throw DataError("vocabulary specials must be [PAD], [UNK], HTTPURL, @MENTION in that order");
  }
  try {
    return Vocabulary(std::move(tokens));
  } catch (const ContractError& e) {
    throw DataError(e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  out << to_json_string();
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

std::string Vocabulary::digest() const { return sha256_hex(to_json_string()); }

void count_tokens(std::string_view normalized, std::unordered_map<std::string, std::uint64_t>& counts) {
  for (auto& token : split_tokens(normalized)) {
    if (!is_reserved(token)) ++counts[std::move(token)];
  }
}

Vocabulary vocab_from_counts(const std::unordered_map<std::string, std::uint64_t>& counts, std::size_t min_freq,
                             std::size_t max_size) {
  if (max_size < kSpecialCount) throw ContractError("build_vocab: max_size must leave room for 4 specials");
  std::vector<std::pair<std::string, std::uint64_t>> ranked;
  for (const auto& [token, count] : counts) {
    if (count >= min_freq) ranked.emplace_back(token, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_size - kSpecialCount) ranked.resize(max_size - kSpecialCount);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [token, count] : ranked) tokens.push_back(std::move(token));
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(std::span<const std::string> normalized_corpus, std::size_t min_freq, std::size_t max_size) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& text : normalized_corpus) count_tokens(text, counts);
  return vocab_from_counts(counts, min_freq, max_size);
}

std::size_t TokenizedSequence::length() const {
  std::size_t n = 0;
  for (auto m : mask) n += m;
  return n;
}

TokenizedSequence tokenize(std::string_view normalized, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw ContractError("tokenize: max_len must be >= 1");
  TokenizedSequence seq;
  seq.ids.assign(max_len, kPadId);
  seq.mask.assign(max_len, 0);
  const auto tokens = split_tokens(normalized);
  if (tokens.empty()) {
    seq.ids[0] = kUnkId;
    seq.mask[0] = 1;
    return seq;
  }
  const std::size_t n = std::min(max_len, tokens.size());
  for (std::size_t i = 0; i < n; ++i) {
    seq.ids[i] = vocab.id(tokens[i]);
    seq.mask[i] = 1;
  }
  return seq;
}

}  // namespace xlenc::preprocess
