#include "promptgate/metrics.hpp"

namespace promptgate {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

Metrics metrics(const ConfusionMatrix& cm) noexcept {
  Metrics m;
  m.asr = ratio(cm.fn, cm.tp + cm.fn);
  m.fpr = ratio(cm.fp, cm.fp + cm.tn);
  m.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  return m;
}

}  // namespace promptgate
