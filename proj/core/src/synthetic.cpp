#include "promptgate/synthetic.hpp"

#include <array>
#include <cmath>
#include <unordered_set>

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

constexpr std::array kProfiles = {
    StructuralProfile::natural_prose, StructuralProfile::digits_heavy, StructuralProfile::special_heavy,
    StructuralProfile::shouting,      StructuralProfile::code_like,    StructuralProfile::terse,
    StructuralProfile::long_words,    StructuralProfile::encoded,      StructuralProfile::markdown_dialogue,
};

constexpr std::array<std::string_view, 9> kProfileNames = {
    "natural_prose", "digits_heavy", "special_heavy", "shouting",          "code_like",
    "terse",         "long_words",   "encoded",       "markdown_dialogue",
};

constexpr std::string_view kGlue[] = {"the", "and", "you", "to", "of", "in", "is", "it",
                                      "that", "with", "as", "this", "are", "be", "or", "at"};
constexpr std::string_view kBenignWords[] = {
    "recipe",   "weather", "garden",  "poem",    "travel",  "history", "summary", "lesson",
    "birthday", "music",   "library", "science", "holiday", "budget",  "exercise", "letter",
    "painting", "coffee",  "museum",  "planet",  "novel",   "friend",  "schedule", "kitten"};
constexpr std::string_view kMaliciousWords[] = {
    "ignore",   "bypass",  "exploit",  "jailbreak", "override", "payload", "weapon",   "malware",
    "disable",  "steal",   "password", "inject",    "forbidden", "unlock", "credentials", "exfiltrate",
    "rootkit",  "phishing", "poison",  "unfiltered", "secret",  "hijack",  "ransom",   "leak"};
constexpr std::string_view kCompoundParts[] = {
    "counter", "intelligence", "infra", "structure", "micro", "controller", "hyper", "parameter",
    "auto",    "configuration", "inter", "connectedness", "pseudo", "randomization", "multi", "threading"};
constexpr std::string_view kSymbolRuns[] = {"{{", "}}", "[[", "]]", "<<", ">>", "##", "@@",
                                            "$$", "%%", "::", "=>", "|", "~~", "**", "^^"};
constexpr std::string_view kIdentifiers[] = {"x", "val", "data", "buf", "node", "item", "cfg", "res"};

constexpr std::string_view kBase64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

class Writer {
 public:
  Writer(Rng& rng, Label label) : rng_(rng), label_(label) {}

  template <std::size_t N>
  std::string_view pick(const std::string_view (&pool)[N]) {
    return pool[uniform_index(rng_, N)];
  }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + uniform_index(rng_, hi - lo + 1); }
  bool chance(double p) { return uniform_unit(rng_) < p; }

  // Content word whose vocabulary depends on the label.
  std::string_view topic() {
    return label_ == Label::malicious && chance(0.6) ? pick(kMaliciousWords) : pick(kBenignWords);
  }
  std::string number(std::size_t digits) {
    std::string s;
    for (std::size_t i = 0; i < digits; ++i) s.push_back(static_cast<char>('0' + uniform_index(rng_, 10)));
    return s;
  }

 private:
  Rng& rng_;
  Label label_;
};

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return out;
}

std::string natural_prose(Writer& w) {
  std::string out;
  const std::size_t sentences = w.between(3, 6);
  for (std::size_t s = 0; s < sentences; ++s) {
    const std::size_t words = w.between(9, 16);
    for (std::size_t i = 0; i < words; ++i) {
      std::string word(w.chance(0.5) ? w.pick(kGlue) : w.topic());
      if (i == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
      out += word;
      out += i + 1 == words ? ". " : " ";
    }
  }
  out.pop_back();
  return out;
}

std::string digits_heavy(Writer& w) {
  std::string out;
  const std::size_t tokens = w.between(8, 16);
  for (std::size_t i = 0; i < tokens; ++i) {
    if (i > 0) out += ' ';
    if (w.chance(0.75)) {
      out += w.number(w.between(3, 8));
      if (w.chance(0.3)) out += "-" + w.number(w.between(2, 4));
    } else {
      out += w.topic();
    }
  }
  return out;
}

std::string special_heavy(Writer& w) {
  std::string out;
  const std::size_t tokens = w.between(8, 16);
  for (std::size_t i = 0; i < tokens; ++i) {
    if (i > 0) out += ' ';
    out += w.pick(kSymbolRuns);
    out += w.topic();
    out += w.pick(kSymbolRuns);
    if (w.chance(0.5)) out += w.pick(kSymbolRuns);
  }
  return out;
}

std::string shouting(Writer& w) {
  std::string out;
  const std::size_t words = w.between(6, 12);
  for (std::size_t i = 0; i < words; ++i) {
    if (i > 0) out += ' ';
    out += upper(w.chance(0.3) ? w.pick(kGlue) : w.topic());
  }
  out += w.chance(0.5) ? "!!!" : " NOW!";
  return out;
}

std::string code_like(Writer& w) {
  std::string out;
  const std::size_t lines = w.between(3, 6);
  for (std::size_t i = 0; i < lines; ++i) {
    const std::string id(w.pick(kIdentifiers));
    const std::string topic(w.topic());
    switch (w.between(0, 4)) {
      case 0: out += "def " + topic + "(" + id + "):\n    return " + id; break;
      case 1: out += "if " + id + " == null:\n    print(" + topic + ")\nelse:\n    " + id + " = true"; break;
      case 2: out += "for " + id + " in " + topic + ":\n    import " + topic; break;
      case 3: out += "const " + id + " = function() { return " + topic + "; }"; break;
      default: out += "try:\n    " + id + " = str(" + topic + ")\nexcept:\n    " + id + " = false"; break;
    }
    out += '\n';
  }
  out.pop_back();
  return out;
}

std::string terse(Writer& w) {
  std::string out;
  const std::size_t words = w.between(2, 4);
  for (std::size_t i = 0; i < words; ++i) {
    if (i > 0) out += ' ';
    out += w.topic();
  }
  return out;
}

std::string long_words(Writer& w) {
  std::string out;
  const std::size_t words = w.between(4, 8);
  for (std::size_t i = 0; i < words; ++i) {
    if (i > 0) out += ' ';
    const std::size_t parts = w.between(3, 5);
    for (std::size_t p = 0; p < parts; ++p) out += w.pick(kCompoundParts);
    out += w.topic();
  }
  return out;
}

std::string encoded(Writer& w) {
  std::string out(w.chance(0.5) ? "b64:" : "data:");
  out += w.topic();
  out += ':';
  const std::size_t len = w.between(40, 120);
  for (std::size_t i = 0; i < len; ++i) out += kBase64[w.between(0, kBase64.size() - 1)];
  if (w.chance(0.5)) out += "==";
  return out;
}

std::string markdown_dialogue(Writer& w) {
  std::string out;
  const std::size_t turns = w.between(3, 6);
  for (std::size_t i = 0; i < turns; ++i) {
    out += i % 2 == 0 ? "> user:\n- " : "> bot:\n- ";
    out += w.topic();
    out += "\n- ";
    out += w.pick(kGlue);
    out += ' ';
    out += w.topic();
    out += "\n\n";
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string render(StructuralProfile profile, Writer& w) {
  switch (profile) {
    case StructuralProfile::natural_prose: return natural_prose(w);
    case StructuralProfile::digits_heavy: return digits_heavy(w);
    case StructuralProfile::special_heavy: return special_heavy(w);
    case StructuralProfile::shouting: return shouting(w);
    case StructuralProfile::code_like: return code_like(w);
    case StructuralProfile::terse: return terse(w);
    case StructuralProfile::long_words: return long_words(w);
    case StructuralProfile::encoded: return encoded(w);
    case StructuralProfile::markdown_dialogue: return markdown_dialogue(w);
  }
  return {};
}

}  // namespace

std::string_view to_string(StructuralProfile profile) { return kProfileNames[static_cast<std::size_t>(profile)]; }

StructuralProfile parse_profile(std::string_view name) {
  for (std::size_t i = 0; i < kProfileNames.size(); ++i) {
    if (kProfileNames[i] == name) return kProfiles[i];
  }
  // Accept the dashed spelling too ("digits-heavy").
  std::string underscored(name);
  for (char& c : underscored) {
    if (c == '-') c = '_';
  }
  for (std::size_t i = 0; i < kProfileNames.size(); ++i) {
    if (kProfileNames[i] == underscored) return kProfiles[i];
  }
  throw InvalidArgument("unknown structural profile '" + std::string(name) + "'");
}

std::span<const StructuralProfile> all_profiles() { return kProfiles; }

std::vector<LabeledPrompt> generate_synthetic_corpus(std::span<const SyntheticDataset> datasets, std::uint64_t seed) {
  std::unordered_set<std::string> tags;
  for (const auto& d : datasets) {
    if (d.count == 0) throw InvalidArgument("dataset '" + d.tag + "': count must be >= 1");
    if (!(d.label_ratio >= 0.0 && d.label_ratio <= 1.0)) {
      throw InvalidArgument("dataset '" + d.tag + "': label_ratio must lie in [0, 1]");
    }
    if (d.tag.empty() || !tags.insert(d.tag).second) throw InvalidArgument("dataset tags must be unique and non-empty");
  }

  std::vector<LabeledPrompt> out;
  std::unordered_set<std::string> seen;
  for (const auto& d : datasets) {
    const auto malicious = static_cast<std::size_t>(std::llround(static_cast<double>(d.count) * d.label_ratio));
    Rng rng(derive_seed(seed, stable_hash(d.tag)));
    for (std::size_t i = 0; i < d.count; ++i) {
      LabeledPrompt p;
      p.id = d.tag + "-" + std::to_string(i);
      p.label = i < malicious ? Label::malicious : Label::benign;
      p.dataset_tag = d.tag;
      Writer writer(rng, p.label);
      do {
        p.prompt = render(d.profile, writer);
      } while (!seen.insert(p.prompt).second);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace promptgate
