#pragma once

// Test-only oracles, deliberately independent of the library's
// implementation paths: plain scalar arithmetic, exhaustive enumeration,
// finite differences.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

/// 4x4 homogeneous-matrix composition of two rigid transforms.
inline Eigen::Matrix4d homogeneous(const Eigen::Matrix3d& r,
                                   const Eigen::Vector3d& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return m;
}

/// Pinhole projection spelled out in scalars.
inline std::array<double, 2> project_scalar(double fx, double fy, double cx,
                                            double cy,
                                            const Eigen::Matrix3d& r,
                                            const Eigen::Vector3d& t,
                                            const Eigen::Vector3d& p) {
  const double x = r(0, 0) * p.x() + r(0, 1) * p.y() + r(0, 2) * p.z() + t.x();
  const double y = r(1, 0) * p.x() + r(1, 1) * p.y() + r(1, 2) * p.z() + t.y();
  const double z = r(2, 0) * p.x() + r(2, 1) * p.y() + r(2, 2) * p.z() + t.z();
  return {fx * x / z + cx, fy * y / z + cy};
}

/// Central-difference gradient of a scalar function of a flat parameter
/// vector.
inline std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> theta, double h = 1e-5) {
  std::vector<double> grad(theta.size());
  for (size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + h;
    const double fp = f(theta);
    theta[k] = saved - h;
    const double fm = f(theta);
    theta[k] = saved;
    grad[k] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Exhaustive max-sum assignment over all permutations of an n x n score
/// matrix; returns the optimal column index per row.
inline std::vector<int> best_assignment(const Eigen::MatrixXd& scores) {
  const int n = static_cast<int>(scores.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = -1e300;
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += scores(i, perm[i]);
    if (total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle
