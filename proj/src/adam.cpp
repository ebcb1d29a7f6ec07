#include "dptbench/adam.hpp"

#include <cmath>

#include "dptbench/errors.hpp"

namespace dptbench::nn {

Adam::Adam(std::vector<ad::Tensor*> params, const AdamConfig& config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ad::Tensor* p : params_) {
    m_.push_back(Mat::Zero(p->rows(), p->cols()));
    v_.push_back(Mat::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(const std::vector<ad::Tensor>& grads) {
  if (grads.size() != params_.size()) throw ContractError("Adam::step: gradient count mismatch");
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(config_.beta1, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(config_.beta2, static_cast<Scalar>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Mat& g = grads[i].mat();
    Mat& m = m_[i];
    Mat& v = v_[i];
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v.array().matrix() + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const Mat m_hat = m / bc1;
    const Mat v_hat = v / bc2;
    params_[i]->mat().array() -=
        config_.lr * m_hat.array() / (v_hat.array().sqrt() + config_.eps);
  }
}

}  // namespace dptbench::nn
