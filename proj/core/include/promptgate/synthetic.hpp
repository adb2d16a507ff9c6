#pragma once

// Seeded synthetic corpora whose datasets differ in structure, so that a
// feature router can learn to tell them apart.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptgate/corpus.hpp"

namespace promptgate {

enum class StructuralProfile {
  natural_prose,      // long sentences full of common English words
  digits_heavy,       // reference numbers, quantities, codes
  special_heavy,      // template markup and symbol runs
  shouting,           // all-caps imperatives
  code_like,          // snippets dense in programming keywords
  terse,              // a handful of short lowercase words
  long_words,         // long compound tokens, sparse whitespace
  encoded,            // base64-looking blobs, no whitespace
  markdown_dialogue,  // many short lines of chat transcript
};

std::string_view to_string(StructuralProfile profile);
StructuralProfile parse_profile(std::string_view name);
std::span<const StructuralProfile> all_profiles();

struct SyntheticDataset {
  std::string tag;
  std::size_t count = 0;
  double label_ratio = 0.5;  // fraction labelled malicious
  StructuralProfile profile = StructuralProfile::natural_prose;
};

// Ids are "<tag>-<index>"; round(count * label_ratio) prompts per dataset are
// malicious. Prompt texts are unique across the whole corpus. Throws
// InvalidArgument for zero counts, ratios outside [0, 1] or repeated tags.
std::vector<LabeledPrompt> generate_synthetic_corpus(std::span<const SyntheticDataset> datasets,
                                                     std::uint64_t seed);

}  // namespace promptgate
