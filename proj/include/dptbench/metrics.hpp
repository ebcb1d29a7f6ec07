#pragma once

#include <span>

#include "dptbench/span_set.hpp"

namespace dptbench::metrics {

// Fraction of positions where pred == gold. Lengths must match and be > 0.
Scalar accuracy(std::span<const int> preds, std::span<const int> golds);

// 1 iff the canonical interval lists are identical.
int span_em(const SpanSet& pred, const SpanSet& gold);

// Token-level F1 over span positions: 2|P&G| / (|P| + |G|). Both empty -> 1,
// exactly one empty -> 0.
Scalar span_f1(const SpanSet& pred, const SpanSet& gold);

}  // namespace dptbench::metrics
