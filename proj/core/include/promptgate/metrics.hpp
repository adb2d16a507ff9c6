#pragma once

#include <cstdint>

namespace promptgate {

// Malicious is the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) noexcept;
  bool operator==(const ConfusionMatrix&) const = default;
};

// Every ratio with a zero denominator is reported as 0.
struct Metrics {
  double asr = 0.0;  // fn / (tp + fn), the attack success rate
  double fpr = 0.0;  // fp / (fp + tn)
  double f1 = 0.0;   // 2tp / (2tp + fp + fn)
  double precision = 0.0;
  double recall = 0.0;
};

Metrics metrics(const ConfusionMatrix& cm) noexcept;

}  // namespace promptgate
