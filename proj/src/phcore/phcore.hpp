#pragma once
#include <functional>

#include "nets/net.hpp"

namespace phwm::phcore {

using ad::Mat;
using ad::Tape;
using ad::Var;
using nets::ParamBinding;
using nets::ParamStore;

// Structure builders. Skewness and positive semidefiniteness hold by construction
// for every raw parameter value, not as a soft penalty:
//   J = A - A^T
//   R = tril(B) tril(B)^T + diag(softplus(d))
Mat make_skew(const Mat& a_raw);
Mat make_dissipation(const Mat& b_raw, const Eigen::VectorXd& d_raw);

struct PhSpec {
  int n = 8;                 // phase-space dimension
  int d_a = 1;               // action dimension
  bool state_dependent = false;
  std::vector<int> h_hidden{64, 64};   // learned energy net
  std::vector<int> net_hidden{32, 32}; // J/R/G generator nets (state-dependent mode)
};

// Computes H(x) for a column batch (1 x B). Tests substitute analytic closures;
// the default is the learned MLP.
using HamiltonianFn = std::function<Var(Tape&, ParamBinding&, Var)>;

// The structured dynamics x' = (J - R) grad H + G a, built so that every term is
// differentiable through the tape (the gradient of H is itself a taped graph).
class PhCore {
public:
  PhCore() = default;
  static PhCore create(ParamStore& store, RngStream& rng, const std::string& prefix,
                       const PhSpec& spec);

  const PhSpec& spec() const { return spec_; }

  // Swap in an analytic Hamiltonian (testing / diagnostics).
  void set_hamiltonian(HamiltonianFn fn) { h_override_ = std::move(fn); }

  Var hamiltonian(Tape& t, ParamBinding& bind, Var x) const;  // 1 x B
  Var grad_h(Tape& t, ParamBinding& bind, Var x) const;       // n x B
  // x: n x B, a: d_a x B.
  Var field(Tape& t, ParamBinding& bind, Var x, Var a) const;

  // Dense structure matrices for spectra and diagnostics (plain arithmetic).
  Mat j_matrix(const ParamStore& store) const;                    // state-independent
  Mat r_matrix(const ParamStore& store) const;
  Mat j_matrix_at(const ParamStore& store, const Eigen::VectorXd& x) const;
  Mat r_matrix_at(const ParamStore& store, const Eigen::VectorXd& x) const;
  Mat g_matrix_at(const ParamStore& store, const Eigen::VectorXd& x) const;  // n x d_a

  // grad H at a single point, plain output (still uses the tape internally).
  Eigen::VectorXd grad_h_at(const ParamStore& store, const Eigen::VectorXd& x) const;
  double h_at(const ParamStore& store, const Eigen::VectorXd& x) const;

private:
  Var dissipation_apply(Tape& t, ParamBinding& bind, Var x, Var g) const;  // R(x) g
  Var skew_apply(Tape& t, ParamBinding& bind, Var x, Var g) const;         // J(x) g
  Var port_apply(Tape& t, ParamBinding& bind, Var x, Var a) const;         // G(x) a

  PhSpec spec_;
  nets::Mlp h_net_;
  HamiltonianFn h_override_;
  // state-independent parameter blocks
  int a_raw_ = -1, b_raw_ = -1, d_raw_ = -1, g_ = -1;
  // state-dependent generator nets
  nets::Mlp j_net_, b_net_, d_net_, g_net_;
  Mat tril_mask_;  // n x n, ones on and below the diagonal
};

// Classic fourth-order Runge-Kutta over a taped vector field. The field closure
// receives intermediate states and must return their time derivative; actions or
// other held quantities are captured by the caller.
Var rk4_step(Tape& t, const std::function<Var(Tape&, Var)>& field, Var x, double dt);

// Mean over columns of the squared distance between prediction and (stopped)
// target. target gradients are blocked here regardless of what the caller built.
Var shadow_loss(Tape& t, Var x_pred, Var x_target);

// Piecewise-linear weight schedule: zero during warmup, linear ramp, then flat.
double curriculum_weight(long long step, long long total_steps, double lambda_max,
                         double warmup_frac, double ramp_frac);

}  // namespace phwm::phcore
