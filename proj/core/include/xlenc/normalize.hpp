#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace xlenc::preprocess {

inline constexpr std::string_view kUrlToken = "HTTPURL";
inline constexpr std::string_view kMentionToken = "@MENTION";

/// Emoji codepoint sequence -> short name (without colons). Replacement is
/// longest-match; a trailing variation selector after a match is dropped.
class EmojiTable {
 public:
  EmojiTable() = default;

  /// The ~240-entry table compiled into the library.
  static const EmojiTable& bundled();
  /// Reads a JSON object whose keys are space-separated hex codepoints
  /// ("1F525", "1F3F3 FE0F 200D 1F308") and whose values are names.
  static EmojiTable load(const std::filesystem::path& path);

  void add(std::u32string sequence, std::string name);
  std::size_t size() const { return names_.size(); }
  std::size_t max_sequence_length() const { return max_len_; }

  /// Name for the longest entry starting at `text[pos]`; sets `matched`.
  const std::string* match(std::u32string_view text, std::size_t pos, std::size_t& matched) const;

 private:
  std::map<std::u32string, std::string, std::less<>> names_;
  std::size_t max_len_ = 0;
};

/// Tweet-style text normalization, applied in this order:
///   1. http(s):// and www. URLs -> HTTPURL; a URL must not follow an ASCII
///      letter, digit or underscore, and runs to the next whitespace
///   2. @handles -> @MENTION
///   3. HTML entities decoded (repeatedly, so double-escaped text settles)
///   4. line breaks removed, whitespace runs collapsed, ends trimmed
///   5. NFC normalization, U+FFFD removed (invalid UTF-8 input decodes to U+FFFD first)
///   6. emoji -> :short_name:
/// The sequence is re-applied until the text stops changing, which makes
/// normalize idempotent even when a later step exposes an earlier pattern
/// (e.g. "&#64;bob" decoding to a mention).
class Normalizer {
 public:
  Normalizer() : emoji_(&EmojiTable::bundled()) {}
  explicit Normalizer(const EmojiTable& emoji) : emoji_(&emoji) {}

  std::string operator()(std::string_view raw) const;

  // Individual steps, exposed for testing. Each maps valid UTF-32 to UTF-32.
  static std::u32string replace_urls(std::u32string_view text);
  static std::u32string replace_mentions(std::u32string_view text);
  static std::u32string decode_html_entities(std::u32string_view text);
  static std::u32string collapse_whitespace(std::u32string_view text);
  static std::u32string fix_encoding(std::u32string_view text);
  std::u32string replace_emoji(std::u32string_view text) const;

 private:
  std::u32string single_pass(std::u32string_view text) const;

  const EmojiTable* emoji_;
};

/// normalize with the bundled emoji table.
std::string normalize(std::string_view raw);

// UTF-8 helpers. Decoding maps ill-formed sequences to U+FFFD.
std::u32string utf8_to_u32(std::string_view text);
std::string u32_to_utf8(std::u32string_view text);
bool is_valid_utf8(std::string_view text);

bool is_unicode_space(char32_t c);

}  // namespace xlenc::preprocess
