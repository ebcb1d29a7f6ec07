#include "dptbench/grad_check.hpp"

#include <cmath>

namespace dptbench::ad {

namespace {

Scalar eval_loss(const LossBuilder& fn, std::span<Tensor* const> params) {
  Graph g;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (Tensor* p : params) leaves.push_back(g.param(*p));
  return fn(g, leaves).tensor().value();
}

}  // namespace

Scalar max_rel_error_vs_central_diff(const LossBuilder& loss_fn,
                                     std::span<Tensor* const> params,
                                     std::span<const Tensor> analytic,
                                     const GradCheckOptions& opt) {
  if (!(opt.eps > 1e-8 && opt.eps < 1e-3))
    throw ContractError("grad_check: eps must be in (1e-8, 1e-3)");
  if (analytic.size() != params.size())
    throw ContractError("grad_check: analytic gradient count mismatch");

  RngStream rng(mix_seed(opt.seed, 0x67c, params.size()));
  Scalar worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    const Index n = p.size();
    std::vector<Index> coords;
    if (n <= opt.max_coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      coords.reserve(static_cast<std::size_t>(opt.max_coords_per_tensor));
      for (int i = 0; i < opt.max_coords_per_tensor; ++i)
        coords.push_back(rng.uniform_int(n));
    }
    for (Index c : coords) {
      const Scalar saved = p.data()[c];
      p.data()[c] = saved + opt.eps;
      const Scalar up = eval_loss(loss_fn, params);
      p.data()[c] = saved - opt.eps;
      const Scalar down = eval_loss(loss_fn, params);
      p.data()[c] = saved;
      const Scalar cd = (up - down) / (2.0 * opt.eps);
      const Scalar a = analytic[pi].size() ? analytic[pi].data()[c] : 0.0;
      const Scalar rel = std::abs(a - cd) / (std::abs(a) + std::abs(cd) + 1e-12);
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

Scalar grad_check(const LossBuilder& loss_fn, std::span<Tensor* const> params,
                  const GradCheckOptions& opt) {
  Graph g;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (Tensor* p : params) leaves.push_back(g.param(*p));
  const Value loss = loss_fn(g, leaves);
  const std::vector<Tensor> grads = backward(g, loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& slot = grads[static_cast<std::size_t>(leaves[i].id)];
    analytic.push_back(slot.size() ? slot : Tensor::zeros_like(*params[i]));
  }
  return max_rel_error_vs_central_diff(loss_fn, params, analytic, opt);
}

}  // namespace dptbench::ad
