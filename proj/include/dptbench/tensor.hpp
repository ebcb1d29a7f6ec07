#pragma once

#include <initializer_list>
#include <vector>

#include "dptbench/errors.hpp"
#include "dptbench/types.hpp"

namespace dptbench::ad {

// Dense real tensor of rank 1 or 2 backed by a row-major Eigen matrix.
// shape() is the declared shape; mat() is the matrix view used by ops
// (rank-1 tensors are stored as a single column).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Mat values) : mat_(std::move(values)) {
    shape_ = {mat_.rows(), mat_.cols()};
  }

  static Tensor scalar(Scalar v) {
    Tensor t;
    t.mat_ = Mat::Constant(1, 1, v);
    t.shape_ = {1};
    return t;
  }

  static Tensor vector(Vec v) {
    Tensor t;
    t.shape_ = {v.size()};
    t.mat_ = std::move(v);
    return t;
  }

  static Tensor zeros(Index rows, Index cols) { return Tensor(Mat::Zero(rows, cols)); }

  static Tensor zeros_like(const Tensor& other) {
    Tensor t;
    t.shape_ = other.shape_;
    t.mat_ = Mat::Zero(other.mat_.rows(), other.mat_.cols());
    return t;
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index size() const { return mat_.size(); }
  Index rows() const { return mat_.rows(); }
  Index cols() const { return mat_.cols(); }
  bool is_scalar() const { return mat_.size() == 1; }

  Mat& mat() { return mat_; }
  const Mat& mat() const { return mat_; }

  Scalar* data() { return mat_.data(); }
  const Scalar* data() const { return mat_.data(); }

  Scalar value() const {
    if (!is_scalar()) throw ContractError("Tensor::value: tensor is not scalar");
    return mat_(0, 0);
  }

  bool all_finite() const { return mat_.allFinite(); }

  bool same_dims(const Tensor& other) const {
    return mat_.rows() == other.mat_.rows() && mat_.cols() == other.mat_.cols();
  }

 private:
  std::vector<Index> shape_;
  Mat mat_;
};

// Elementwise numerically stable sigmoid; outputs are clamped into the open
// interval (0, 1). Throws InvalidValueError on non-finite input.
Tensor sigmoid(const Tensor& x);
Scalar sigmoid(Scalar x);

// Binary cross entropy on a probability. Scores at or beyond {0, 1} are
// clamped to [eps, 1 - eps] so the result is never NaN.
Scalar bce(Scalar score, int label, Scalar eps = 1e-12);

inline constexpr Scalar kBceEpsilon = 1e-12;

}  // namespace dptbench::ad
