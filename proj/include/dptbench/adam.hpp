#pragma once

#include <vector>

#include "dptbench/tensor.hpp"

namespace dptbench::nn {

struct AdamConfig {
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

// Adaptive moment estimation with bias correction. Updates run in parameter
// order with plain loops; repeated runs from the same state are bitwise
// reproducible.
class Adam {
 public:
  Adam(std::vector<ad::Tensor*> params, const AdamConfig& config);

  // `grads` aligned with the parameter list given at construction.
  void step(const std::vector<ad::Tensor>& grads);

 private:
  std::vector<ad::Tensor*> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  AdamConfig config_;
  long t_ = 0;
};

}  // namespace dptbench::nn
