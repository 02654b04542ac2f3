#pragma once

#include <Eigen/Core>

#include "plvo/autodiff.hpp"

namespace plvo {

inline ad::Tensor to_tensor(const Eigen::MatrixXd& m) {
  ad::Tensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) t.at(i, j) = m(i, j);
  return t;
}

inline Eigen::MatrixXd to_matrix(const ad::Tensor& t) {
  Eigen::MatrixXd m(t.rows, t.cols);
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) m(i, j) = t.at(i, j);
  return m;
}

}  // namespace plvo
