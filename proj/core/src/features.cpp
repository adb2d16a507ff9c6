#include "promptgate/features.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "promptgate/error.hpp"

namespace promptgate {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kNames = {
    "prompt_length",    "whitespace_proportion", "special_char_proportion",
    "avg_word_length",  "digit_proportion",      "uppercase_proportion",
    "code_keyword_count", "nl_word_count",       "shannon_entropy",
};

constexpr std::array<std::string_view, 21> kCodeKeywords = {
    "if",  "else",     "for", "while", "def",   "return", "import",
    "class", "function", "var", "let",  "const", "print",  "lambda",
    "try", "except",   "int", "str",   "null",  "true",   "false",
};

constexpr std::array<std::string_view, 20> kNaturalWords = {
    "the", "and", "you", "do",   "a",    "to",   "of", "in", "is", "it",
    "that", "for", "on", "with", "as",  "this", "are", "be", "or", "at",
};

struct Range {
  char32_t lo;
  char32_t hi;
};

bool in_ranges(char32_t c, std::span<const Range> ranges) {
  return std::any_of(ranges.begin(), ranges.end(),
                     [c](const Range& r) { return c >= r.lo && c <= r.hi; });
}

// Letters and numbers outside ASCII. A block-level approximation of the
// Unicode L and N categories covering the scripts prompts realistically use.
constexpr Range kNonAsciiAlnum[] = {
    {0x00AA, 0x00AA}, {0x00B2, 0x00B3}, {0x00B5, 0x00B5}, {0x00B9, 0x00BA},
    {0x00BC, 0x00BE}, {0x00C0, 0x00D6}, {0x00D8, 0x00F6}, {0x00F8, 0x02AF},
    {0x0370, 0x0373}, {0x0376, 0x0377}, {0x037B, 0x037D}, {0x0386, 0x0386},
    {0x0388, 0x03FF}, {0x0400, 0x0481}, {0x048A, 0x052F}, {0x0531, 0x0556},
    {0x0561, 0x0587}, {0x05D0, 0x05EA}, {0x0620, 0x064A}, {0x0660, 0x0669},
    {0x0671, 0x06D3}, {0x06F0, 0x06F9}, {0x0904, 0x0939}, {0x0966, 0x096F},
    {0x0E01, 0x0E30}, {0x0E50, 0x0E59}, {0x10A0, 0x10FF}, {0x1E00, 0x1FBC},
    {0x2070, 0x2079}, {0x2080, 0x2089}, {0x2160, 0x2188}, {0x3041, 0x3096},
    {0x30A1, 0x30FA}, {0x3400, 0x4DBF}, {0x4E00, 0x9FFF}, {0xAC00, 0xD7A3},
    {0xFF10, 0xFF19}, {0xFF21, 0xFF3A}, {0xFF41, 0xFF5A}, {0x20000, 0x2FFFF},
};

constexpr Range kNonAsciiUpper[] = {
    {0x00C0, 0x00D6}, {0x00D8, 0x00DE}, {0x0386, 0x0386}, {0x0388, 0x038A},
    {0x038C, 0x038C}, {0x038E, 0x038F}, {0x0391, 0x03A1}, {0x03A3, 0x03AB},
    {0x0400, 0x042F}, {0x0531, 0x0556}, {0x10A0, 0x10C5}, {0xFF21, 0xFF3A},
};

// Latin Extended-A and the Cyrillic supplement alternate upper/lower by
// code point parity.
bool is_paired_upper(char32_t c) {
  if (c >= 0x0100 && c <= 0x0137) return c % 2 == 0;
  if (c >= 0x0139 && c <= 0x0148) return c % 2 == 1;
  if (c >= 0x014A && c <= 0x0177) return c % 2 == 0;
  if (c == 0x0178) return true;
  if (c >= 0x0179 && c <= 0x017E) return c % 2 == 1;
  if (c >= 0x0460 && c <= 0x0481) return c % 2 == 0;
  if (c >= 0x048A && c <= 0x04BF) return c % 2 == 0;
  if (c >= 0x1E00 && c <= 0x1E95) return c % 2 == 0;
  return false;
}

std::string ascii_lower(std::u32string_view token) {
  std::string out;
  out.reserve(token.size());
  for (char32_t c : token) {
    if (c >= 0x80) return {};  // keyword lists are ASCII-only
    char ch = static_cast<char>(c);
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    out.push_back(ch);
  }
  return out;
}

std::u32string_view strip_punctuation(std::u32string_view token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  while (b < e && !chars::is_alphanumeric(token[b])) ++b;
  while (e > b && !chars::is_alphanumeric(token[e - 1])) --e;
  return token.substr(b, e - b);
}

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& list, std::string_view word) {
  return std::find(list.begin(), list.end(), word) != list.end();
}

double entropy_of(const std::u32string& text) {
  if (text.empty()) return 0.0;
  std::array<std::size_t, 128> ascii{};
  std::vector<char32_t> other;
  for (char32_t c : text) {
    if (c < 128) {
      ++ascii[c];
    } else {
      other.push_back(c);
    }
  }
  std::sort(other.begin(), other.end());

  const double total = static_cast<double>(text.size());
  double h = 0.0;
  auto accumulate = [&](std::size_t count) {
    const double p = static_cast<double>(count) / total;
    h -= p * std::log2(p);
  };
  for (std::size_t count : ascii) {
    if (count > 0) accumulate(count);
  }
  for (std::size_t i = 0; i < other.size();) {
    std::size_t j = i;
    while (j < other.size() && other[j] == other[i]) ++j;
    accumulate(j - i);
    i = j;
  }
  // -0.0 for single-symbol text
  return h <= 0.0 ? 0.0 : h;
}

}  // namespace

namespace chars {

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char b0 = s[i];
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    }
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if ((b0 & 0xE0) == 0xC0) {
      len = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4, cp = b0 & 0x07, min = 0x10000;
    }
    bool ok = len != 0 && i + len <= n;
    for (std::size_t k = 1; ok && k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (s[i + k] & 0x3F);
      }
    }
    if (ok && (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(0xFFFD);
      ++i;
    }
  }
  return out;
}

bool is_whitespace(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

bool is_alphanumeric(char32_t c) {
  if (c < 0x80) {
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || is_digit(c);
  }
  return in_ranges(c, kNonAsciiAlnum);
}

bool is_uppercase(char32_t c) {
  if (c < 0x80) return c >= U'A' && c <= U'Z';
  return in_ranges(c, kNonAsciiUpper) || is_paired_upper(c);
}

}  // namespace chars

std::array<double, kFeatureCount> FeatureVector::values() const {
  return {static_cast<double>(prompt_length),
          whitespace_proportion,
          special_char_proportion,
          avg_word_length,
          digit_proportion,
          uppercase_proportion,
          static_cast<double>(code_keyword_count),
          static_cast<double>(nl_word_count),
          shannon_entropy};
}

const std::array<std::string_view, kFeatureCount>& feature_names() { return kNames; }

std::size_t feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return i;
  }
  throw NotFound("unknown feature '" + std::string(name) + "'");
}

std::span<const std::string_view> code_keywords() { return kCodeKeywords; }
std::span<const std::string_view> natural_language_words() { return kNaturalWords; }

FeatureVector extract_features(std::string_view prompt) {
  const std::u32string text = chars::decode_utf8(prompt);
  FeatureVector fv;
  if (text.empty()) return fv;

  std::size_t whitespace = 0;
  std::size_t special = 0;
  std::size_t digits = 0;
  std::size_t upper = 0;
  for (char32_t c : text) {
    if (chars::is_whitespace(c)) {
      ++whitespace;
    } else if (!chars::is_alphanumeric(c)) {
      ++special;
    }
    if (chars::is_digit(c)) ++digits;
    if (chars::is_uppercase(c)) ++upper;
  }

  std::size_t words = 0;
  std::size_t word_chars = 0;
  const std::u32string_view view(text);
  for (std::size_t i = 0; i < view.size();) {
    if (chars::is_whitespace(view[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < view.size() && !chars::is_whitespace(view[j])) ++j;
    ++words;
    word_chars += j - i;
    const std::string token = ascii_lower(strip_punctuation(view.substr(i, j - i)));
    if (!token.empty()) {
      if (contains(kCodeKeywords, token)) ++fv.code_keyword_count;
      if (contains(kNaturalWords, token)) ++fv.nl_word_count;
    }
    i = j;
  }

  const double n = static_cast<double>(text.size());
  fv.prompt_length = text.size();
  fv.whitespace_proportion = static_cast<double>(whitespace) / n;
  fv.special_char_proportion = static_cast<double>(special) / n;
  fv.digit_proportion = static_cast<double>(digits) / n;
  fv.uppercase_proportion = static_cast<double>(upper) / n;
  fv.avg_word_length = words == 0 ? 0.0 : static_cast<double>(word_chars) / static_cast<double>(words);
  fv.shannon_entropy = entropy_of(text);
  return fv;
}

double shannon_entropy(std::string_view text) { return entropy_of(chars::decode_utf8(text)); }

FeatureSet::FeatureSet() {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    names_.emplace_back(kNames[i]);
    indices_.push_back(i);
  }
}

FeatureSet::FeatureSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw InvalidArgument("feature set must not be empty");
  std::unordered_set<std::string> seen;
  for (const auto& name : names_) {
    if (!seen.insert(name).second) throw InvalidArgument("feature '" + name + "' listed twice");
    indices_.push_back(feature_index(name));
  }
}

bool FeatureSet::is_full() const noexcept {
  if (names_.size() != kNames.size()) return false;
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (indices_[i] != i) return false;
  }
  return true;
}

std::vector<double> FeatureSet::project(const FeatureVector& fv) const {
  const auto all = fv.values();
  std::vector<double> out;
  out.reserve(indices_.size());
  for (std::size_t i : indices_) out.push_back(all[i]);
  return out;
}

}  // namespace promptgate
