#include "xlenc/normalize.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <array>
#include <string>
#include <unordered_map>

#include "xlenc/error.hpp"

namespace xlenc::preprocess {

namespace {

constexpr char32_t kReplacement = 0xFFFD;
constexpr int kMaxPasses = 16;

bool is_word_char(char32_t c) { return c == U'_' || u_isalnum(static_cast<UChar32>(c)); }

bool is_ascii_word(char32_t c) {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9') || c == U'_';
}

char32_t ascii_lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c - U'A' + U'a' : c; }

bool starts_with_ci(std::u32string_view text, std::size_t pos, std::u32string_view prefix) {
  if (text.size() - pos < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (ascii_lower(text[pos + i]) != prefix[i]) return false;
  }
  return true;
}

const std::unordered_map<std::u32string, char32_t>& named_entities() {
  static const std::unordered_map<std::u32string, char32_t> table = {
      {U"amp", U'&'},       {U"lt", U'<'},        {U"gt", U'>'},        {U"quot", U'"'},
      {U"apos", U'\''},     {U"nbsp", 0x00A0},    {U"iexcl", 0x00A1},   {U"cent", 0x00A2},
      {U"pound", 0x00A3},   {U"curren", 0x00A4},  {U"yen", 0x00A5},     {U"brvbar", 0x00A6},
      {U"sect", 0x00A7},    {U"uml", 0x00A8},     {U"copy", 0x00A9},    {U"ordf", 0x00AA},
      {U"laquo", 0x00AB},   {U"not", 0x00AC},     {U"shy", 0x00AD},     {U"reg", 0x00AE},
      {U"macr", 0x00AF},    {U"deg", 0x00B0},     {U"plusmn", 0x00B1},  {U"sup2", 0x00B2},
      {U"sup3", 0x00B3},    {U"acute", 0x00B4},   {U"micro", 0x00B5},   {U"para", 0x00B6},
      {U"middot", 0x00B7},  {U"cedil", 0x00B8},   {U"sup1", 0x00B9},    {U"ordm", 0x00BA},
      {U"raquo", 0x00BB},   {U"frac14", 0x00BC},  {U"frac12", 0x00BD},  {U"frac34", 0x00BE},
      {U"iquest", 0x00BF},  {U"Agrave", 0x00C0},  {U"Aacute", 0x00C1},  {U"Acirc", 0x00C2},
      {U"Atilde", 0x00C3},  {U"Auml", 0x00C4},    {U"Aring", 0x00C5},   {U"AElig", 0x00C6},
      {U"Ccedil", 0x00C7},  {U"Egrave", 0x00C8},  {U"Eacute", 0x00C9},  {U"Ecirc", 0x00CA},
      {U"Euml", 0x00CB},    {U"Igrave", 0x00CC},  {U"Iacute", 0x00CD},  {U"Icirc", 0x00CE},
      {U"Iuml", 0x00CF},    {U"ETH", 0x00D0},     {U"Ntilde", 0x00D1},  {U"Ograve", 0x00D2},
      {U"Oacute", 0x00D3},  {U"Ocirc", 0x00D4},   {U"Otilde", 0x00D5},  {U"Ouml", 0x00D6},
      {U"times", 0x00D7},   {U"Oslash", 0x00D8},  {U"Ugrave", 0x00D9},  {U"Uacute", 0x00DA},
      {U"Ucirc", 0x00DB},   {U"Uuml", 0x00DC},    {U"Yacute", 0x00DD},  {U"THORN", 0x00DE},
      {U"szlig", 0x00DF},   {U"agrave", 0x00E0},  {U"aacute", 0x00E1},  {U"acirc", 0x00E2},
      {U"atilde", 0x00E3},  {U"auml", 0x00E4},    {U"aring", 0x00E5},   {U"aelig", 0x00E6},
      {U"ccedil", 0x00E7},  {U"egrave", 0x00E8},  {U"eacute", 0x00E9},  {U"ecirc", 0x00EA},
      {U"euml", 0x00EB},    {U"igrave", 0x00EC},  {U"iacute", 0x00ED},  {U"icirc", 0x00EE},
      {U"iuml", 0x00EF},    {U"eth", 0x00F0},     {U"ntilde", 0x00F1},  {U"ograve", 0x00F2},
      {U"oacute", 0x00F3},  {U"ocirc", 0x00F4},   {U"otilde", 0x00F5},  {U"ouml", 0x00F6},
      {U"divide", 0x00F7},  {U"oslash", 0x00F8},  {U"ugrave", 0x00F9},  {U"uacute", 0x00FA},
      {U"ucirc", 0x00FB},   {U"uuml", 0x00FC},    {U"yacute", 0x00FD},  {U"thorn", 0x00FE},
      {U"yuml", 0x00FF},    {U"ndash", 0x2013},   {U"mdash", 0x2014},   {U"lsquo", 0x2018},
      {U"rsquo", 0x2019},   {U"sbquo", 0x201A},   {U"ldquo", 0x201C},   {U"rdquo", 0x201D},
      {U"bdquo", 0x201E},   {U"dagger", 0x2020},  {U"bull", 0x2022},    {U"hellip", 0x2026},
      {U"permil", 0x2030},  {U"prime", 0x2032},   {U"lsaquo", 0x2039},  {U"rsaquo", 0x203A},
      {U"euro", 0x20AC},    {U"trade", 0x2122},   {U"larr", 0x2190},    {U"uarr", 0x2191},
      {U"rarr", 0x2192},    {U"darr", 0x2193},    {U"hearts", 0x2665},  {U"ensp", 0x2002},
      {U"emsp", 0x2003},    {U"thinsp", 0x2009},  {U"zwnj", 0x200C},    {U"zwj", 0x200D},
  };
  return table;
}

char32_t numeric_entity(std::u32string_view digits, bool hex) {
  if (digits.empty() || digits.size() > 8) return kReplacement;
  std::uint32_t value = 0;
  for (char32_t c : digits) {
    std::uint32_t d;
    if (c >= U'0' && c <= U'9') {
      d = c - U'0';
    } else if (hex && ascii_lower(c) >= U'a' && ascii_lower(c) <= U'f') {
      d = ascii_lower(c) - U'a' + 10;
    } else {
      return 0;  // not an entity
    }
    value = value * (hex ? 16 : 10) + d;
  }
  if (value == 0 || value > 0x10FFFF || (value >= 0xD800 && value <= 0xDFFF)) return kReplacement;
  return static_cast<char32_t>(value);
}

std::u32string decode_entities_once(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == U'&') {
      const std::size_t semi = text.find(U';', i + 1);
      if (semi != std::u32string_view::npos && semi - i <= 12) {
        const std::u32string_view body = text.substr(i + 1, semi - i - 1);
        char32_t decoded = 0;
        if (body.size() >= 2 && body[0] == U'#') {
          const bool hex = body[1] == U'x' || body[1] == U'X';
          decoded = numeric_entity(body.substr(hex ? 2 : 1), hex);
        } else if (const auto it = named_entities().find(std::u32string(body)); it != named_entities().end()) {
          decoded = it->second;
        }
        if (decoded != 0) {
          out.push_back(decoded);
          i = semi + 1;
          continue;
        }
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

}  // namespace

bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

std::u32string utf8_to_u32(std::string_view text) {
  // fromUTF8 substitutes U+FFFD for ill-formed sequences.
  const icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  std::u32string out(static_cast<std::size_t>(u.countChar32()), U'\0');
  UErrorCode status = U_ZERO_ERROR;
  const int32_t n = u.toUTF32(reinterpret_cast<UChar32*>(out.data()), static_cast<int32_t>(out.size()), status);
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string u32_to_utf8(std::u32string_view text) {
  const icu::UnicodeString u =
      icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(text.data()), static_cast<int32_t>(text.size()));
  std::string out;
  u.toUTF8String(out);
  return out;
}

bool is_valid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    if (c < 0) return false;
  }
  return true;
}

std::u32string Normalizer::replace_urls(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const bool boundary = i == 0 || !is_ascii_word(text[i - 1]);
    std::size_t prefix = 0;
    bool need_body = false;
    if (boundary) {
      if (starts_with_ci(text, i, U"http://")) {
        prefix = 7;
      } else if (starts_with_ci(text, i, U"https://")) {
        prefix = 8;
      } else if (starts_with_ci(text, i, U"www.")) {
        prefix = 4;
        need_body = true;
      }
    }
    if (prefix > 0) {
      std::size_t end = i + prefix;
      while (end < text.size() && !is_unicode_space(text[end])) ++end;
      if (!need_body || end > i + prefix) {
        out += U"HTTPURL";
        i = end;
        continue;
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

std::u32string Normalizer::replace_mentions(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == U'@' && (i == 0 || !is_word_char(text[i - 1])) && i + 1 < text.size() &&
        is_ascii_word(text[i + 1])) {
      std::size_t end = i + 1;
      while (end < text.size() && is_ascii_word(text[end])) ++end;
      out += U"@MENTION";
      i = end;
      continue;
    }
    out.push_back(text[i++]);
  }
  return out;
}

std::u32string Normalizer::decode_html_entities(std::u32string_view text) {
  std::u32string current(text);
  // Double-escaped input ("&amp;amp;") is common; decode until stable.
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    std::u32string next = decode_entities_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

std::u32string Normalizer::collapse_whitespace(std::u32string_view text) {
  std::u32string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char32_t c : text) {
    if (is_unicode_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::u32string Normalizer::fix_encoding(std::u32string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  const icu::UnicodeString src =
      icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(text.data()), static_cast<int32_t>(text.size()));
  const icu::UnicodeString composed = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalization failed");

  std::u32string out(static_cast<std::size_t>(composed.countChar32()), U'\0');
  const int32_t n = composed.toUTF32(reinterpret_cast<UChar32*>(out.data()), static_cast<int32_t>(out.size()), status);
  out.resize(static_cast<std::size_t>(n));
  std::erase(out, kReplacement);
  return out;
}

std::u32string Normalizer::replace_emoji(std::u32string_view text) const {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t matched = 0;
    if (const std::string* name = emoji_->match(text, i, matched)) {
      out.push_back(U':');
      out += utf8_to_u32(*name);
      out.push_back(U':');
      i += matched;
      if (i < text.size() && (text[i] == 0xFE0F || text[i] == 0xFE0E)) ++i;
      continue;
    }
    out.push_back(text[i++]);
  }
  return out;
}

std::u32string Normalizer::single_pass(std::u32string_view text) const {
  std::u32string s = replace_urls(text);
  s = replace_mentions(s);
  s = decode_html_entities(s);
  s = collapse_whitespace(s);
  s = fix_encoding(s);
  return replace_emoji(s);
}

std::string Normalizer::operator()(std::string_view raw) const {
  std::u32string current = utf8_to_u32(raw);
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    std::u32string next = single_pass(current);
    if (next == current) break;
    current = std::move(next);
  }
  return u32_to_utf8(current);
}

std::string normalize(std::string_view raw) {
  static const Normalizer normalizer;
  return normalizer(raw);
}

}  // namespace xlenc::preprocess
