#pragma once
#include <functional>
#include <optional>

#include "nets/net.hpp"
#include "phcore/phcore.hpp"

namespace phwm::energy {

using ad::Mat;
using ad::Tape;
using ad::Var;
using nets::ParamBinding;
using nets::ParamStore;

struct EnergySpec {
  int d_q = 1;
  int d_a = 1;
  int k = 4;                        // history steps; window holds k+1 positions
  int tcn_channels = 32;
  std::vector<int> hidden{32, 32};  // V, L, G, D heads
  int enc_hidden = 32;              // single hidden layer of the action encoder
  int d_tilde = 0;                  // encoded action dim; 0 means d_a
};

// Linear rescaling between raw simulator energies and the normalized targets the
// model is trained on. Estimated once from the training corpus and then frozen.
struct EnergyCalibration {
  double offset = 0.0;
  double scale = 1.0;
};

// Hamiltonian surrogate with hard structure:
//   p      = Tcn(q_{t-k..t})
//   H(q,p) = V(q) + 0.5 p' Minv(q) p,    Minv = L L' from a Cholesky-factor head
//   f_q    = dH/dp
//   f_p    = -dH/dq - D(q,p) f_q + G(q) enc(a),   D diagonal and nonnegative
// so that dH/dt = P_work - P_diss holds as an algebraic identity of the graph.
// Every head can be swapped for an analytic closure, which is how the tests
// instantiate a ground-truth oracle.
class EnergyModel {
public:
  using UnaryFn = std::function<Var(Tape&, Var)>;
  using BinaryFn = std::function<Var(Tape&, Var, Var)>;

  EnergyModel() = default;
  static EnergyModel create(ParamStore& store, RngStream& rng, const std::string& prefix,
                            const EnergySpec& spec);

  const EnergySpec& spec() const { return spec_; }
  int d_tilde() const { return spec_.d_tilde > 0 ? spec_.d_tilde : spec_.d_a; }

  void set_calibration(const EnergyCalibration& c) { calib_ = c; }
  const EnergyCalibration& calibration() const { return calib_; }

  // Analytic overrides for testing and diagnostics.
  UnaryFn potential_override;       // q -> 1 x B
  UnaryFn mass_chol_override;       // q -> packed L, (d_q*d_q) x B
  UnaryFn momentum_override;        // window -> d_q x B
  UnaryFn encoder_override;         // a -> d_tilde x B
  UnaryFn port_override;            // q -> packed G, (d_q*d_tilde) x B
  BinaryFn damping_override;        // (q, p) -> d_q x B, nonnegative

  Var momentum(Tape& t, ParamBinding& bind, Var window) const;
  Var potential(Tape& t, ParamBinding& bind, Var q) const;
  Var mass_chol_packed(Tape& t, ParamBinding& bind, Var q) const;
  Var hamiltonian(Tape& t, ParamBinding& bind, Var q, Var p) const;  // 1 x B, normalized units
  Var encode_action(Tape& t, ParamBinding& bind, Var a) const;
  Var damping_diag(Tape& t, ParamBinding& bind, Var q, Var p) const;
  Var port_packed(Tape& t, ParamBinding& bind, Var q) const;

  struct FieldParts {
    Var f_q, f_p;        // d_q x B each
    Var p_work, p_diss;  // 1 x B each
    Var grad_q, grad_p;  // dH/dq, dH/dp
  };
  FieldParts field_parts(Tape& t, ParamBinding& bind, Var q, Var p, Var a_enc) const;

  // One RK4 step of (q, p) under a held encoded action; returns the stacked
  // state [q'; p'] (2 d_q x B).
  Var step(Tape& t, ParamBinding& bind, Var q, Var p, Var a, double dt) const;

  // Momentum from the window, step, then H at the successor state (normalized).
  Var predict_next_energy(Tape& t, ParamBinding& bind, Var window, Var a, double dt) const;
  // H at the window's current state (normalized).
  Var predict_energy(Tape& t, ParamBinding& bind, Var window) const;

  double to_raw(double normalized) const { return normalized * calib_.scale + calib_.offset; }
  double to_normalized(double raw) const { return (raw - calib_.offset) / calib_.scale; }

  struct Batch {
    Mat window;    // (k+1)*d_q x B
    Mat action;    // d_a x B
    Mat e_now;     // 1 x B, raw simulator energies
    Mat e_next;    // 1 x B, raw
    Mat p_oracle;  // d_q x B, raw conjugate momenta
    double dt = 0.0;
  };
  struct LossWeights {
    double now = 1.0, next = 1.0, momentum = 1.0;
  };
  Var loss(Tape& t, ParamBinding& bind, const Batch& batch, const LossWeights& w) const;

  // Plain-value helpers for evaluation loops.
  double predict_energy_raw(const ParamStore& store, const Eigen::VectorXd& window) const;
  double predict_next_energy_raw(const ParamStore& store, const Eigen::VectorXd& window,
                                 const Eigen::VectorXd& action, double dt) const;

private:
  Var chol_from_raw(Tape& t, Var raw, Eigen::Index batch) const;

  EnergySpec spec_;
  EnergyCalibration calib_;
  nets::Tcn p_net_;
  nets::Mlp v_net_, l_net_, g_net_, d_net_, enc_;
  Mat scatter_diag_, scatter_strict_;  // packed-L assembly matrices
};

}  // namespace phwm::energy
