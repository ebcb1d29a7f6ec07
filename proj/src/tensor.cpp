#include "dptbench/tensor.hpp"

#include <cmath>
#include <limits>

namespace dptbench::ad {

Scalar sigmoid(Scalar x) {
  if (!std::isfinite(x)) throw InvalidValueError("sigmoid: non-finite input");
  Scalar p;
  if (x >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-x));
  } else {
    const Scalar e = std::exp(x);
    p = e / (1.0 + e);
  }
  // Keep the output strictly inside (0, 1) even when exp saturates.
  const Scalar hi = std::nextafter(1.0, 0.0);
  const Scalar lo = std::numeric_limits<Scalar>::denorm_min();
  if (p >= 1.0) p = hi;
  if (p <= 0.0) p = lo;
  return p;
}

Tensor sigmoid(const Tensor& x) {
  if (!x.all_finite()) throw InvalidValueError("sigmoid: non-finite input");
  Tensor out = Tensor::zeros_like(x);
  const Scalar* src = x.data();
  Scalar* dst = out.data();
  for (Index i = 0; i < x.size(); ++i) dst[i] = sigmoid(src[i]);
  return out;
}

Scalar bce(Scalar score, int label, Scalar eps) {
  if (label != 0 && label != 1) throw ContractError("bce: label must be 0 or 1");
  if (std::isnan(score)) throw InvalidValueError("bce: NaN score");
  const Scalar s = std::min(std::max(score, eps), 1.0 - eps);
  const Scalar y = static_cast<Scalar>(label);
  return -(y * std::log(s)) - ((1.0 - y) * std::log(1.0 - s));
}

}  // namespace dptbench::ad
