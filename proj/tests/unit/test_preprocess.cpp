#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "xlenc/error.hpp"
#include "xlenc/normalize.hpp"
#include "xlenc/vocab.hpp"

using namespace xlenc;
using namespace xlenc::preprocess;
using xlenc::testing::TempDir;

namespace {

std::vector<xlenc::testing::GoldenCase> golden_cases() {
  return xlenc::testing::load_golden_cases(std::string(XLENC_TEST_DATA_DIR) + "/normalize_golden.jsonl");
}

bool has_raw_url(const std::string& s) {
  for (const char* scheme : {"http://", "https://", "www."}) {
    for (std::size_t pos = s.find(scheme); pos != std::string::npos; pos = s.find(scheme, pos + 1)) {
      const bool boundary = pos == 0 || !(std::isalnum(static_cast<unsigned char>(s[pos - 1])) || s[pos - 1] == '_');
      const std::size_t body = pos + std::strlen(scheme);
      const bool bare_www = scheme[0] == 'w' && (body == s.size() || s[body] == ' ');
      if (boundary && !bare_www) return true;
    }
  }
  return false;
}

}  // namespace

TEST(Normalize, ReplacesUrls) { EXPECT_EQ(normalize("Help needed http://t.co/abc"), "Help needed HTTPURL"); }

TEST(Normalize, ReplacesMentionsAndCollapsesNewlines) {
  EXPECT_EQ(normalize("@john please RT\n\n now"), "@MENTION please RT now");
}

TEST(Normalize, DecodesEntities) { EXPECT_EQ(normalize("AT&amp;T is down"), "AT&T is down"); }

TEST(Normalize, NamesEmoji) { EXPECT_EQ(normalize("fire \U0001F525"), "fire :fire:"); }

TEST(Normalize, GoldenFile) {
  const auto cases = golden_cases();
  ASSERT_GE(cases.size(), 40u);
  std::map<std::string, int> per_step;
  for (const auto& c : cases) {
    ++per_step[c.step];
    EXPECT_EQ(normalize(c.input), c.expected) << "step " << c.step << ", input \"" << c.input << "\"";
  }
  for (const char* step : {"url", "mention", "entity", "whitespace", "encoding", "emoji"}) {
    EXPECT_GE(per_step[step], 5) << step;
  }
}

TEST(Normalize, IsIdempotentOnFuzz) {
  Rng rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const std::string raw = xlenc::testing::random_fuzz_text(rng);
    const std::string once = normalize(raw);
    EXPECT_EQ(normalize(once), once) << "input: " << raw;
  }
}

TEST(Normalize, OutputSatisfiesTextInvariants) {
  Rng rng(77);
  for (int i = 0; i < 2000; ++i) {
    const std::string out = normalize(xlenc::testing::random_fuzz_text(rng));
    EXPECT_TRUE(is_valid_utf8(out));
    EXPECT_EQ(out.find('\n'), std::string::npos);
    EXPECT_EQ(out.find('\r'), std::string::npos);
    EXPECT_EQ(out.find("  "), std::string::npos);
    EXPECT_EQ(out.find("\xef\xbf\xbd"), std::string::npos);
    if (!out.empty()) {
      EXPECT_NE(out.front(), ' ');
      EXPECT_NE(out.back(), ' ');
    }
    EXPECT_FALSE(has_raw_url(out)) << out;
  }
}

TEST(Normalize, StepsInIsolation) {
  EXPECT_EQ(u32_to_utf8(Normalizer::replace_urls(U"a https://x.y/z b")), "a HTTPURL b");
  EXPECT_EQ(u32_to_utf8(Normalizer::replace_mentions(U"hi @bob_1!")), "hi @MENTION!");
  EXPECT_EQ(u32_to_utf8(Normalizer::decode_html_entities(U"&amp;amp;&#65;&#x42;")), "&AB");
  EXPECT_EQ(u32_to_utf8(Normalizer::collapse_whitespace(U" a \t\n b ")), "a b");
  EXPECT_EQ(u32_to_utf8(Normalizer::fix_encoding(U"e\u0301\uFFFD")), "\xc3\xa9");
  const Normalizer n;
  EXPECT_EQ(u32_to_utf8(n.replace_emoji(U"\U0001F525\uFE0F!")), ":fire:!");
}

TEST(Normalize, InvalidUtf8DecodesToReplacementThenDisappears) {
  EXPECT_EQ(utf8_to_u32("a\xff" "b"), U"a\uFFFDb");
  EXPECT_EQ(normalize("a\xff" "b"), "ab");
  EXPECT_FALSE(is_valid_utf8("\xc3"));
  EXPECT_TRUE(is_valid_utf8("caf\xc3\xa9"));
}

TEST(EmojiTable, BundledTableIsSmallButUseful) {
  const auto& t = EmojiTable::bundled();
  EXPECT_GE(t.size(), 200u);
  std::size_t matched = 0;
  const std::u32string text = U"\U0001F64F";
  ASSERT_NE(t.match(text, 0, matched), nullptr);
  EXPECT_EQ(*t.match(text, 0, matched), "folded_hands");
  EXPECT_EQ(matched, 1u);
}

TEST(EmojiTable, CustomTableOverridesAndPrefersLongestMatch) {
  TempDir dir;
  xlenc::testing::write_file(dir / "emoji.json", R"({"1F525": "flame", "1F525 1F525": "big_fire"})");
  const auto table = EmojiTable::load(dir / "emoji.json");
  const Normalizer n(table);
  EXPECT_EQ(n("\U0001F525\U0001F525\U0001F525"), ":big_fire::flame:");
  EXPECT_EQ(n("\U0001F602"), "\U0001F602");
}

TEST(EmojiTable, BadFilesAreDataErrors) {
  TempDir dir;
  xlenc::testing::write_file(dir / "a.json", R"({"XYZ": "x"})");
  xlenc::testing::write_file(dir / "b.json", R"([1])");
  xlenc::testing::write_file(dir / "c.json", R"({"1F525": ""})");
  EXPECT_THROW(EmojiTable::load(dir / "a.json"), DataError);
  EXPECT_THROW(EmojiTable::load(dir / "b.json"), DataError);
  EXPECT_THROW(EmojiTable::load(dir / "c.json"), DataError);
  EXPECT_THROW(EmojiTable::load(dir / "missing.json"), IoError);
}

TEST(SplitTokens, PunctuationLowercaseAndSpecials) {
  EXPECT_EQ(split_tokens("Help, NOW! HTTPURL @MENTION"),
            (std::vector<std::string>{"help", ",", "now", "!", "HTTPURL", "@MENTION"}));
  EXPECT_EQ(split_tokens("don't :fire:"), (std::vector<std::string>{"don", "'", "t", ":", "fire", ":"}));
  EXPECT_EQ(split_tokens("東京 ÉCOLE"), (std::vector<std::string>{"東", "京", "école"}));
  EXPECT_TRUE(split_tokens("").empty());
}

TEST(BuildVocab, FrequencyOrder) {
  const std::vector<std::string> corpus{"a a b"};
  const auto v = build_vocab(corpus, 1, 100);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_LT(v.id("a"), v.id("b"));
  EXPECT_EQ(v.id("a"), 4);
}

TEST(BuildVocab, ThresholdCanLeaveOnlySpecials) {
  const std::vector<std::string> corpus{"a b"};
  const auto v = build_vocab(corpus, 2, 100);
  EXPECT_EQ(v.size(), kSpecialCount);
}

TEST(BuildVocab, SpecialTokensAreNeverDuplicated) {
  const std::vector<std::string> corpus{"HTTPURL HTTPURL @MENTION go"};
  const auto v = build_vocab(corpus, 1, 100);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.id("HTTPURL"), kUrlId);
  EXPECT_EQ(v.id("@MENTION"), kMentionId);
}

TEST(BuildVocab, EmptyCorpusGivesSpecials) {
  const auto v = build_vocab({}, 1, 10);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(kPadId), "[PAD]");
  EXPECT_EQ(v.token(kUnkId), "[UNK]");
}

TEST(BuildVocab, TiesAreLexicographicAndOrderFree) {
  std::vector<std::string> corpus{"delta beta", "alpha gamma", "beta alpha", "gamma delta", "zeta"};
  const auto v = build_vocab(corpus, 1, 100);
  EXPECT_EQ(std::vector<std::string>(v.tokens().begin() + 4, v.tokens().end()),
            (std::vector<std::string>{"alpha", "beta", "delta", "gamma", "zeta"}));
  std::reverse(corpus.begin(), corpus.end());
  EXPECT_EQ(build_vocab(corpus, 1, 100), v);
}

TEST(BuildVocab, TruncatesToMaxSize) {
  const std::vector<std::string> corpus{"c c c b b a"};
  const auto v = build_vocab(corpus, 1, 6);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_TRUE(v.contains("c"));
  EXPECT_TRUE(v.contains("b"));
  EXPECT_FALSE(v.contains("a"));
  EXPECT_THROW(build_vocab(corpus, 1, 3), ContractError);
}

TEST(Vocabulary, DenseInjectiveIds) {
  const Vocabulary v({"x", "y"});
  for (std::int32_t id = 0; id < static_cast<std::int32_t>(v.size()); ++id) EXPECT_EQ(v.id(v.token(id)), id);
  EXPECT_EQ(v.id("never seen"), kUnkId);
  EXPECT_THROW(Vocabulary({"x", "x"}), ContractError);
  EXPECT_THROW(Vocabulary({"HTTPURL"}), ContractError);
}

TEST(Vocabulary, JsonRoundTripAndDigest) {
  TempDir dir;
  const Vocabulary v({"fire", "água", "\""});
  v.save(dir / "v.json");
  const auto loaded = Vocabulary::load(dir / "v.json");
  EXPECT_EQ(loaded, v);
  EXPECT_EQ(loaded.digest(), v.digest());
  EXPECT_EQ(v.digest().size(), 64u);
  EXPECT_NE(Vocabulary({"fire"}).digest(), v.digest());
  const auto j = nlohmann::json::parse(v.to_json_string());
  EXPECT_EQ(j["specials"].size(), 4u);
  EXPECT_EQ(j["tokens"][0], "fire");
}

TEST(Vocabulary, RejectsMalformedJson) {
  EXPECT_THROW(Vocabulary::from_json_string("[]"), DataError);
  EXPECT_THROW(Vocabulary::from_json_string(R"({"specials":["[UNK]","[PAD]","HTTPURL","@MENTION"],"tokens":[]})"),
               DataError);
  EXPECT_THROW(Vocabulary::from_json_string(R"({"specials":["[PAD]","[UNK]","HTTPURL","@MENTION"],"tokens":[1]})"),
               DataError);
  EXPECT_THROW(Vocabulary::load("/nonexistent/vocab.json"), IoError);
}

TEST(Tokenize, DirectLookupWithPadding) {
  // Ids 4 and 5 are help and needed.
  const Vocabulary v({"help", "needed"});
  const auto s = tokenize("help needed HTTPURL", v, 5);
  EXPECT_EQ(s.ids, (std::vector<std::int32_t>{4, 5, 2, 0, 0}));
  EXPECT_EQ(s.mask, (std::vector<std::uint8_t>{1, 1, 1, 0, 0}));
}

TEST(Tokenize, TruncatesAtMaxLen) {
  const auto s = tokenize("a b c d", Vocabulary(), 3);
  EXPECT_EQ(s.length(), 3u);
  EXPECT_EQ(s.ids.size(), 3u);
}

TEST(Tokenize, EmptyTextIsOneUnknownToken) {
  const auto s = tokenize("", Vocabulary(), 4);
  EXPECT_EQ(s.ids, (std::vector<std::int32_t>{1, 0, 0, 0}));
  EXPECT_EQ(s.mask, (std::vector<std::uint8_t>{1, 0, 0, 0}));
}

TEST(Tokenize, InvariantsHoldOnRandomText) {
  Rng rng(9);
  const Vocabulary v({"a", "z", "9", ":", "fire", "日"});
  for (int i = 0; i < 2000; ++i) {
    const std::string text = normalize(xlenc::testing::random_fuzz_text(rng));
    const std::size_t max_len = 1 + rng.below(12);
    const auto s = tokenize(text, v, max_len);
    ASSERT_EQ(s.ids.size(), max_len);
    ASSERT_EQ(s.mask.size(), max_len);
    const std::size_t n = s.length();
    EXPECT_EQ(n, std::min(max_len, std::max<std::size_t>(1, split_tokens(text).size())));
    for (std::size_t k = 0; k < max_len; ++k) {
      EXPECT_EQ(s.mask[k], k < n ? 1 : 0);
      if (s.mask[k] == 0) EXPECT_EQ(s.ids[k], kPadId);
      EXPECT_LT(s.ids[k], static_cast<std::int32_t>(v.size()));
    }
  }
}
