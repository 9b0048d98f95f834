#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xlenc::preprocess {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::int32_t kUrlId = 2;
inline constexpr std::int32_t kMentionId = 3;
inline constexpr std::size_t kSpecialCount = 4;

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";

/// Splits normalized text into word tokens: whitespace separates, every
/// punctuation or symbol codepoint is its own token, ideographic and kana
/// codepoints are single tokens, and everything else is lowercased.
/// HTTPURL and @MENTION survive intact with their original case.
std::vector<std::string> split_tokens(std::string_view normalized);

/// Dense token -> id mapping. Ids 0..3 are [PAD], [UNK], HTTPURL, @MENTION.
class Vocabulary {
 public:
  /// Specials only.
  Vocabulary();
  /// `tokens` are the regular entries, assigned ids 4.. in order.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return id_to_token_.size(); }
  std::int32_t id(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  std::span<const std::string> tokens() const { return id_to_token_; }

  /// Canonical JSON: {"specials":[...],"tokens":[...]}.
  std::string to_json_string() const;
  static Vocabulary from_json_string(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  /// SHA-256 of the canonical JSON.
  std::string digest() const;

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
};

/// Frequency-ranked vocabulary: tokens with count >= min_freq, most frequent
/// first, ties in byte order, total size (specials included) <= max_size.
Vocabulary build_vocab(std::span<const std::string> normalized_corpus, std::size_t min_freq,
                       std::size_t max_size);

/// Token counting half of build_vocab, exposed so several inputs can be merged.
void count_tokens(std::string_view normalized, std::unordered_map<std::string, std::uint64_t>& counts);
Vocabulary vocab_from_counts(const std::unordered_map<std::string, std::uint64_t>& counts,
                             std::size_t min_freq, std::size_t max_size);

/// Fixed-length ids plus attention mask. The mask is a run of 1s followed by
/// 0s with at least one 1, and ids are [PAD] wherever the mask is 0.
struct TokenizedSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;

  std::size_t length() const;  // number of real tokens
  bool operator==(const TokenizedSequence&) const = default;
};

TokenizedSequence tokenize(std::string_view normalized, const Vocabulary& vocab, std::size_t max_len);

}  // namespace xlenc::preprocess
