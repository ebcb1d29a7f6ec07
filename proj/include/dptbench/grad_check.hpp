#pragma once

#include <functional>
#include <span>

#include "dptbench/graph.hpp"
#include "dptbench/rng.hpp"

namespace dptbench::ad {

struct GradCheckOptions {
  Scalar eps = 1e-5;                // central-difference step, must be in (1e-8, 1e-3)
  int max_coords_per_tensor = 200;  // bounds runtime; sampling keeps detection power
  std::uint64_t seed = 7;
};

// Builds a scalar loss over graph leaves bound to `params`, in order.
using LossBuilder = std::function<Value(Graph&, std::span<const Value>)>;

// Worst sampled relative deviation between the supplied analytic gradients
// and central differences of the loss: |a - cd| / (|a| + |cd| + 1e-12).
Scalar max_rel_error_vs_central_diff(const LossBuilder& loss_fn,
                                     std::span<Tensor* const> params,
                                     std::span<const Tensor> analytic,
                                     const GradCheckOptions& opt);

// Full check: analytic gradients from backward() against central differences.
Scalar grad_check(const LossBuilder& loss_fn, std::span<Tensor* const> params,
                  const GradCheckOptions& opt = {});

}  // namespace dptbench::ad
