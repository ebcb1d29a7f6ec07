#include "dptbench/span_set.hpp"

#include <algorithm>

namespace dptbench {

SpanSet SpanSet::from_intervals(std::vector<Interval> spans) {
  for (const Interval& s : spans) {
    if (s[0] < 0 || s[1] < s[0]) throw ContractError("SpanSet: invalid interval");
  }
  std::sort(spans.begin(), spans.end());
  SpanSet out;
  for (const Interval& s : spans) {
    if (!out.spans_.empty() && s[0] <= out.spans_.back()[1] + 1) {
      out.spans_.back()[1] = std::max(out.spans_.back()[1], s[1]);
    } else {
      out.spans_.push_back(s);
    }
  }
  return out;
}

SpanSet SpanSet::from_mask(const std::vector<bool>& mask) {
  SpanSet out;
  Index start = -1;
  for (Index i = 0; i < static_cast<Index>(mask.size()); ++i) {
    if (mask[static_cast<std::size_t>(i)]) {
      if (start < 0) start = i;
    } else if (start >= 0) {
      out.spans_.push_back({start, i - 1});
      start = -1;
    }
  }
  if (start >= 0) out.spans_.push_back({start, static_cast<Index>(mask.size()) - 1});
  return out;
}

Index SpanSet::position_count() const {
  Index n = 0;
  for (const Interval& s : spans_) n += s[1] - s[0] + 1;
  return n;
}

std::vector<Index> SpanSet::positions() const {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(position_count()));
  for (const Interval& s : spans_)
    for (Index t = s[0]; t <= s[1]; ++t) out.push_back(t);
  return out;
}

}  // namespace dptbench
