#pragma once

#include <Eigen/Dense>

namespace dptbench {

// 64-bit reals throughout; row-major storage so Tensor::data() is row-major.
using Scalar = double;
using Index = Eigen::Index;
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

}  // namespace dptbench
