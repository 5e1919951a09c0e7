#pragma once
#include <Eigen/Dense>
#include <functional>

// Shared numeric helpers for the test suite.
namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Central finite difference of a scalar function.
inline VectorXd fd_grad(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                        double h = 1e-5) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    double hi = h * std::max(1.0, std::abs(x[i]));
    xp[i] += hi;
    xm[i] -= hi;
    g[i] = (f(xp) - f(xm)) / (2.0 * hi);
  }
  return g;
}

inline double rel_err(const VectorXd& a, const VectorXd& b) {
  double denom = std::max(1e-12, std::max(a.norm(), b.norm()));
  return (a - b).norm() / denom;
}

inline double rel_err(const MatrixXd& a, const MatrixXd& b) {
  double denom = std::max(1e-12, std::max(a.norm(), b.norm()));
  return (a - b).norm() / denom;
}

}  // namespace testutil
