#pragma once
#include <Eigen/Dense>

#include "nets/net.hpp"

namespace phwm::latent {

using ad::Mat;
using ad::Tape;
using ad::Var;

// Affine read-out from the physical half of the deterministic state into the
// structured phase space: x = W h_phys + b.
class Projection {
public:
  Projection() = default;
  static Projection create(nets::ParamStore& store, RngStream& rng, const std::string& prefix,
                           int h_phys_dim, int n);

  Var project(Tape& t, nets::ParamBinding& bind, Var h_phys) const;
  Mat project_plain(const nets::ParamStore& store, const Mat& h_phys) const;

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

private:
  int in_ = 0, out_ = 0;
  int w_ = -1, b_ = -1;
};

// Row slices of the deterministic state: [h_phys; h_env].
inline Var physical_part(Tape& t, Var h, int split) { return t.rows(h, 0, split); }
inline Var environment_part(Tape& t, Var h, int split) {
  return t.rows(h, split, static_cast<int>(t.val(h).rows()) - split);
}

struct PhaseVolume {
  Eigen::VectorXd variances;  // principal-component variances, descending
  double sum_log = 0.0;       // sum of log(max(variance, floor))
};

// Occupied-volume proxy for a cloud of phase-space points (samples are rows).
// Variances come from the eigen-decomposition of the sample covariance; tiny
// components are floored so collapsed directions contribute a finite penalty.
PhaseVolume log_phase_volume(const Mat& samples, int n_components, double floor_value = 1e-8);

// Percent shrinkage of a volume proxy relative to a baseline value.
double volume_shrink_percent(double baseline, double ours);

}  // namespace phwm::latent
