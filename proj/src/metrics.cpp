#include "dptbench/metrics.hpp"

#include <algorithm>

namespace dptbench::metrics {

Scalar accuracy(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size()) throw ContractError("accuracy: length mismatch");
  if (preds.empty()) throw ContractError("accuracy: empty input");
  long hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i] ? 1 : 0;
  return static_cast<Scalar>(hits) / static_cast<Scalar>(preds.size());
}

int span_em(const SpanSet& pred, const SpanSet& gold) {
  return pred.intervals() == gold.intervals() ? 1 : 0;
}

Scalar span_f1(const SpanSet& pred, const SpanSet& gold) {
  const Index p = pred.position_count();
  const Index g = gold.position_count();
  if (p == 0 && g == 0) return 1.0;
  if (p == 0 || g == 0) return 0.0;
  // Intersection size by merging the two sorted interval lists.
  Index overlap = 0;
  std::size_t i = 0, j = 0;
  const auto& ps = pred.intervals();
  const auto& gs = gold.intervals();
  while (i < ps.size() && j < gs.size()) {
    const Index lo = std::max(ps[i][0], gs[j][0]);
    const Index hi = std::min(ps[i][1], gs[j][1]);
    if (hi >= lo) overlap += hi - lo + 1;
    if (ps[i][1] < gs[j][1])
      ++i;
    else
      ++j;
  }
  return 2.0 * static_cast<Scalar>(overlap) / static_cast<Scalar>(p + g);
}

}  // namespace dptbench::metrics
