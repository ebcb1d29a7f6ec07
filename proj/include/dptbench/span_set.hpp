#pragma once

#include <array>
#include <vector>

#include "dptbench/errors.hpp"
#include "dptbench/types.hpp"

namespace dptbench {

// Sorted, non-overlapping, maximal [start, end] token-index intervals
// (0-based, inclusive). Adjacent intervals are merged on construction.
class SpanSet {
 public:
  using Interval = std::array<Index, 2>;

  SpanSet() = default;

  static SpanSet from_intervals(std::vector<Interval> spans);

  // Maximal runs of `true`.
  static SpanSet from_mask(const std::vector<bool>& mask);

  const std::vector<Interval>& intervals() const { return spans_; }
  bool empty() const { return spans_.empty(); }
  Index max_end() const { return spans_.empty() ? -1 : spans_.back()[1]; }

  Index position_count() const;
  std::vector<Index> positions() const;

  friend bool operator==(const SpanSet&, const SpanSet&) = default;

 private:
  std::vector<Interval> spans_;
};

}  // namespace dptbench
