#include "promptgate/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

constexpr std::array<std::uint64_t, 4> kPartPercent = {56, 14, 10, 20};

// Largest-remainder apportionment of `total` by integer weights.
std::vector<std::uint64_t> apportion(std::uint64_t total, std::span<const std::uint64_t> weights) {
  const std::uint64_t denom = std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
  std::vector<std::uint64_t> out(weights.size());
  std::vector<std::uint64_t> remainder(weights.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out[i] = total * weights[i] / denom;
    remainder[i] = total * weights[i] % denom;
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k]];
  return out;
}

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform_index(rng, i)]);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::malicious ? "malicious" : "benign"; }

Label parse_label(std::string_view text) {
  if (text == "malicious") return Label::malicious;
  if (text == "benign") return Label::benign;
  throw ParseError("invalid label '" + std::string(text) + "'");
}

std::vector<LabeledPrompt> parse_corpus(std::string_view text, const std::string& dataset_tag) {
  std::vector<LabeledPrompt> out;
  std::vector<std::size_t> bad_lines;
  std::string first_problem;
  std::unordered_set<std::string> ids;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;

    auto fail = [&](const std::string& why) {
      if (bad_lines.empty()) first_problem = "line " + std::to_string(line_no) + ": " + why;
      bad_lines.push_back(line_no);
    };
    try {
      const auto doc = nlohmann::json::parse(line);
      if (!doc.is_object()) {
        fail("record is not an object");
        continue;
      }
      bool complete = true;
      for (const char* key : {"id", "prompt", "label", "dataset"}) {
        if (!doc.contains(key) || !doc[key].is_string()) {
          fail(std::string("missing or non-string field '") + key + "'");
          complete = false;
          break;
        }
      }
      if (!complete) continue;
      LabeledPrompt record;
      record.id = doc["id"].get<std::string>();
      record.prompt = doc["prompt"].get<std::string>();
      record.label = parse_label(doc["label"].get<std::string>());
      record.dataset_tag = dataset_tag.empty() ? doc["dataset"].get<std::string>() : dataset_tag;
      if (record.id.empty()) {
        fail("empty id");
        continue;
      }
      if (!ids.insert(record.id).second) {
        throw DuplicateError("line " + std::to_string(line_no) + ": duplicate id '" + record.id + "'");
      }
      out.push_back(std::move(record));
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    } catch (const ParseError& e) {
      fail(e.what());
    }
  }
  if (!bad_lines.empty()) {
    std::string what = "malformed corpus record(s) on line(s)";
    for (std::size_t l : bad_lines) what += " " + std::to_string(l);
    throw ParseError(what + " (" + first_problem + ")", std::move(bad_lines));
  }
  return out;
}

std::vector<LabeledPrompt> ingest_dataset(const std::string& path, const std::string& dataset_tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("corpus file '" + path + "' not found");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_corpus(buffer.str(), dataset_tag);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.lines());
  }
}

std::string serialize_record(const LabeledPrompt& prompt) {
  nlohmann::ordered_json doc = {{"id", prompt.id},
                                {"prompt", prompt.prompt},
                                {"label", to_string(prompt.label)},
                                {"dataset", prompt.dataset_tag}};
  return doc.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void write_corpus(const std::string& path, std::span<const LabeledPrompt> prompts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& p : prompts) out << serialize_record(p) << '\n';
  if (!out) throw Error("failed writing '" + path + "'");
}

CorpusSplit partition_dataset(std::span<const LabeledPrompt> prompts, std::uint64_t seed) {
  if (prompts.empty()) throw InvalidArgument("partition_dataset needs at least one prompt");

  std::vector<LabeledPrompt> malicious;
  std::vector<LabeledPrompt> benign;
  for (const auto& p : prompts) (p.label == Label::malicious ? malicious : benign).push_back(p);

  Rng malicious_rng(derive_seed(seed, 1));
  Rng benign_rng(derive_seed(seed, 0));
  shuffle(malicious, malicious_rng);
  shuffle(benign, benign_rng);

  const auto sizes = apportion(prompts.size(), kPartPercent);
  const auto malicious_sizes = apportion(malicious.size(), sizes);

  CorpusSplit split;
  std::array<std::vector<LabeledPrompt>*, 4> parts = {&split.train_fit, &split.train_val, &split.calibration,
                                                      &split.test};
  std::size_t m = 0;
  std::size_t b = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto& part = *parts[p];
    part.reserve(sizes[p]);
    for (std::uint64_t i = 0; i < malicious_sizes[p]; ++i) part.push_back(std::move(malicious[m++]));
    for (std::uint64_t i = 0; i < sizes[p] - malicious_sizes[p]; ++i) part.push_back(std::move(benign[b++]));
  }
  return split;
}

GlobalSets update_global_sets(const GlobalSets& globals, const CorpusSplit& split, const std::string& dataset_tag) {
  if (std::find(globals.dataset_tags.begin(), globals.dataset_tags.end(), dataset_tag) != globals.dataset_tags.end()) {
    throw DuplicateError("dataset '" + dataset_tag + "' was already ingested");
  }
  std::unordered_set<std::string> ids;
  for (const auto& p : globals.calibration) ids.insert(p.id);
  for (const auto& p : globals.test) ids.insert(p.id);
  for (const auto* part : {&split.calibration, &split.test}) {
    for (const auto& p : *part) {
      if (!ids.insert(p.id).second) throw DuplicateError("prompt id '" + p.id + "' already present in global sets");
    }
  }

  GlobalSets out = globals;
  out.calibration.insert(out.calibration.end(), split.calibration.begin(), split.calibration.end());
  out.test.insert(out.test.end(), split.test.begin(), split.test.end());
  out.dataset_tags.push_back(dataset_tag);
  return out;
}

void CorpusIndex::add(std::span<const LabeledPrompt> prompts) {
  for (const auto& p : prompts) by_text_.emplace(p.prompt, p);
}

const LabeledPrompt* CorpusIndex::find(std::string_view prompt) const {
  const auto it = by_text_.find(std::string(prompt));
  return it == by_text_.end() ? nullptr : &it->second;
}

}  // namespace promptgate
