#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptgate {

enum class Label { benign, malicious };

std::string_view to_string(Label label);
// Throws ParseError for anything but "benign" / "malicious".
Label parse_label(std::string_view text);

struct LabeledPrompt {
  std::string id;
  std::string prompt;
  Label label = Label::benign;
  std::string dataset_tag;

  bool operator==(const LabeledPrompt&) const = default;
};

// Reads the line-delimited corpus format: one JSON object per line with
// string fields id, prompt, label, dataset. Every record is tagged with
// `dataset_tag`. Blank lines are skipped. Throws NotFound for a missing file,
// ParseError (carrying the offending line numbers) for malformed records and
// DuplicateError for repeated ids.
std::vector<LabeledPrompt> ingest_dataset(const std::string& path, const std::string& dataset_tag);

// Parses corpus records from an in-memory buffer; same rules as ingest_dataset
// except that the dataset field of each record is kept when `dataset_tag` is
// empty.
std::vector<LabeledPrompt> parse_corpus(std::string_view text, const std::string& dataset_tag = {});

std::string serialize_record(const LabeledPrompt& prompt);
void write_corpus(const std::string& path, std::span<const LabeledPrompt> prompts);

// Disjoint 56/14/10/20 percent split of one dataset.
struct CorpusSplit {
  std::vector<LabeledPrompt> train_fit;
  std::vector<LabeledPrompt> train_val;
  std::vector<LabeledPrompt> calibration;
  std::vector<LabeledPrompt> test;

  std::size_t size() const { return train_fit.size() + train_val.size() + calibration.size() + test.size(); }
};

// Label-stratified deterministic partition. Part sizes are the largest
// remainder apportionment of |prompts| over 56/14/10/20 percent (ties favour
// train_fit, then train_val, calibration, test); the malicious count of each
// part is the matching apportionment of the malicious total.
CorpusSplit partition_dataset(std::span<const LabeledPrompt> prompts, std::uint64_t seed);

// Cumulative calibration and test sets over every ingested dataset.
struct GlobalSets {
  std::vector<LabeledPrompt> calibration;
  std::vector<LabeledPrompt> test;
  std::vector<std::string> dataset_tags;
};

// Throws DuplicateError if the tag was already ingested or a prompt id is
// already present in either global set.
GlobalSets update_global_sets(const GlobalSets& globals, const CorpusSplit& split,
                              const std::string& dataset_tag);

// Read-only lookup from prompt text to its corpus record.
class CorpusIndex {
 public:
  CorpusIndex() = default;
  explicit CorpusIndex(std::span<const LabeledPrompt> prompts) { add(prompts); }

  // First record wins when two records share a prompt text.
  void add(std::span<const LabeledPrompt> prompts);
  const LabeledPrompt* find(std::string_view prompt) const;
  std::size_t size() const noexcept { return by_text_.size(); }

 private:
  std::unordered_map<std::string, LabeledPrompt> by_text_;
};

}  // namespace promptgate
