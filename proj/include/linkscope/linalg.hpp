#pragma once

#include <Eigen/Dense>

namespace linkscope {

// Row-major so that one feature vector is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace linkscope
