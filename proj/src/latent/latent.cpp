#include "latent/latent.hpp"

#include <cmath>

#include "core/error.hpp"

namespace phwm::latent {

Projection Projection::create(nets::ParamStore& store, RngStream& rng, const std::string& prefix,
                              int h_phys_dim, int n) {
  require(h_phys_dim > 0 && n > 0, ErrorKind::Dimension, "projection: bad dimensions");
  Projection p;
  p.in_ = h_phys_dim;
  p.out_ = n;
  p.w_ = store.add_uniform(prefix + ".w", n, h_phys_dim,
                           std::sqrt(3.0 / static_cast<double>(h_phys_dim)), rng);
  p.b_ = store.add_constant(prefix + ".b", n, 1, 0.0);
  return p;
}

Var Projection::project(Tape& t, nets::ParamBinding& bind, Var h_phys) const {
  require(t.val(h_phys).rows() == in_, ErrorKind::Dimension, "projection: input dim mismatch");
  return t.add_colvec(t.matmul(bind.use(w_), h_phys), bind.use(b_));
}

Mat Projection::project_plain(const nets::ParamStore& store, const Mat& h_phys) const {
  require(h_phys.rows() == in_, ErrorKind::Dimension, "projection: input dim mismatch");
  return (store.view(w_) * h_phys).colwise() + Eigen::VectorXd(store.view(b_).col(0));
}

PhaseVolume log_phase_volume(const Mat& samples, int n_components, double floor_value) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  require(n >= 2, ErrorKind::InsufficientData,
          "phase volume: need at least two samples, got " + std::to_string(n));
  require(n_components >= 1 && n_components <= d, ErrorKind::Dimension,
          "phase volume: component count out of range");

  Mat centered = samples.rowwise() - samples.colwise().mean();
  Mat cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  require(es.info() == Eigen::Success, ErrorKind::Numerical, "phase volume: eigensolver failed");

  // SelfAdjointEigenSolver sorts ascending; we report descending.
  PhaseVolume out;
  out.variances.resize(n_components);
  for (int i = 0; i < n_components; ++i) out.variances[i] = es.eigenvalues()[d - 1 - i];
  out.sum_log = 0.0;
  for (int i = 0; i < n_components; ++i)
    out.sum_log += std::log(std::max(out.variances[i], floor_value));
  return out;
}

double volume_shrink_percent(double baseline, double ours) {
  require(std::abs(baseline) > 1e-12, ErrorKind::DegenerateBaseline,
          "volume shrink: baseline too close to zero for a relative comparison");
  return (baseline - ours) / std::abs(baseline) * 100.0;
}

}  // namespace phwm::latent
