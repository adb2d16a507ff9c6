#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace promptgate {

inline constexpr std::size_t kFeatureCount = 9;

// Structural features of a prompt. Characters are Unicode scalar values
// decoded from UTF-8; invalid bytes decode to U+FFFD, one per byte.
struct FeatureVector {
  std::uint64_t prompt_length = 0;
  double whitespace_proportion = 0.0;
  double special_char_proportion = 0.0;
  double avg_word_length = 0.0;
  double digit_proportion = 0.0;
  double uppercase_proportion = 0.0;
  std::uint64_t code_keyword_count = 0;
  std::uint64_t nl_word_count = 0;
  double shannon_entropy = 0.0;

  // Values in canonical order (see feature_names()).
  std::array<double, kFeatureCount> values() const;

  bool operator==(const FeatureVector&) const = default;
};

// Canonical names, in the order used by FeatureVector::values().
const std::array<std::string_view, kFeatureCount>& feature_names();

// Index of a canonical feature name; throws NotFound for unknown names.
std::size_t feature_index(std::string_view name);

FeatureVector extract_features(std::string_view prompt);

// Base-2 entropy of the character frequency distribution; 0 for empty text.
double shannon_entropy(std::string_view text);

// Lowercase keyword lists consulted by the two keyword counters.
std::span<const std::string_view> code_keywords();
std::span<const std::string_view> natural_language_words();

// Character classes used by the extractor, exposed for tests and tooling.
namespace chars {
std::u32string decode_utf8(std::string_view text);
bool is_whitespace(char32_t c);
bool is_digit(char32_t c);
bool is_alphanumeric(char32_t c);
bool is_uppercase(char32_t c);
}  // namespace chars

// An ordered subset of the canonical features that a router consumes.
class FeatureSet {
 public:
  // All nine features.
  FeatureSet();
  // Throws NotFound on unknown names, InvalidArgument on empty or repeated names.
  explicit FeatureSet(std::vector<std::string> names);

  static FeatureSet full() { return FeatureSet(); }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  bool is_full() const noexcept;
  // "full9" or "pruned".
  std::string label() const { return is_full() ? "full9" : "pruned"; }

  std::vector<double> project(const FeatureVector& fv) const;

  bool operator==(const FeatureSet& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::size_t> indices_;
};

}  // namespace promptgate
