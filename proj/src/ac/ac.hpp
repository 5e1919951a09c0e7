#pragma once
#include "energy/energy.hpp"
#include "rssm/wm.hpp"

namespace phwm::ac {

using ad::Mat;
using ad::Tape;
using ad::Var;
using nets::ParamBinding;
using nets::ParamStore;

// Interpolated percentile (p in [0, 1]) of an unsorted sample.
double percentile(std::vector<double> xs, double p);

// Backward recursion over a batch of return columns. r and cont are H x B,
// values are (H+1) x B including the bootstrap row; the result is (H+1) x B
// with the bootstrap copied into the last row.
Mat lambda_returns(const Mat& r, const Mat& values, const Mat& cont, double gamma,
                   double lambda);

// w_t = prod_{tau<=t} (cont_tau * gamma) with gamma = 1 - 1/horizon; H x B.
Mat discount_weights(const Mat& cont, int horizon);

// EMA of batch return quantiles; the normalization span never drops below one,
// so advantages are only ever shrunk.
struct ReturnScaler {
  double decay = 0.99;
  double q05 = 0.0, q95 = 0.0;
  bool primed = false;

  void update(const Mat& returns);
  double span() const { return std::max(1.0, q95 - q05); }
};

// Lagrange multipliers with projected ascent. Step size zero freezes the state.
struct DualState {
  double lambda_e = 0.0, lambda_s = 0.0;
  double eps_e = 0.0, eps_s = 0.0;
  double eta_lambda = 1e-2;

  void update(double c_energy, double c_smooth);
  bool active() const { return eta_lambda > 0.0 || lambda_e > 0.0 || lambda_s > 0.0; }
};

struct AcSpec {
  int feat_dim = 0;  // h_dim + z_dim of the world model
  int d_a = 1;
  std::vector<int> actor_hidden{64, 64};
  std::vector<int> critic_hidden{64, 64};
  int horizon = 15;
  double lambda_ret = 0.95;
  double entropy_eta = 3e-4;
  double alpha_p = 1.0, alpha_v = 1.0;
  double slow_decay = 0.98;     // EMA of critic parameters
  double scaler_decay = 0.99;   // EMA of return quantiles
  double lr = 3e-4;
};

struct PolicyDist {
  Var mean, log_std;  // d_a x B, log-std clamped to [-5, 2]
};

// Tanh-squashed Gaussian policy and a Gaussian-head critic over world-model
// features [h; z]. The squash keeps emitted actions inside [-1, 1].
class ActorCritic {
public:
  ActorCritic() = default;
  static ActorCritic create(ParamStore& store, RngStream& rng, const std::string& prefix,
                            const AcSpec& spec);

  const AcSpec& spec() const { return spec_; }

  PolicyDist actor(Tape& t, ParamBinding& bind, Var feat) const;
  Var critic(Tape& t, ParamBinding& bind, Var feat) const;  // 1 x B value means

  Mat actor_plain(const ParamStore& store, const Mat& feat) const;  // stacked mean/log-std
  Mat critic_plain(const ParamStore& store, const Mat& feat) const;

  // log pi(a | s) for a = tanh(u) with the pre-squash sample u held fixed;
  // includes the tanh density correction. 1 x B.
  Var log_prob(Tape& t, const PolicyDist& d, Var u_const) const;
  // Closed-form entropy of the base Gaussian, 1 x B.
  Var entropy(Tape& t, const PolicyDist& d) const;

  // Plain sampling helper: draws u ~ N(mean, std) from stacked parameters.
  Mat sample_pre_squash(const Mat& stacked, RngStream& rng) const;

private:
  AcSpec spec_;
  nets::Mlp actor_, critic_;
};

// Score-function policy objective: stopped weights times (-log pi * stopped
// advantage - eta * entropy), averaged over all columns. Gradients reach the
// actor only through the log density and the entropy.
struct ActorLossParts {
  Var loss, entropy_mean;
};
ActorLossParts actor_loss(Tape& t, const ActorCritic& net, ParamBinding& bind, const Mat& feat,
                          const Mat& u, const Mat& adv, const Mat& w, double entropy_eta);

// Unit-variance Gaussian NLL of the value head against both the return target
// and the slow critic's value, weighted and averaged.
Var critic_loss(Tape& t, const ActorCritic& net, ParamBinding& bind, const Mat& feat,
                const Mat& r_target, const Mat& v_slow, const Mat& w);

// Plain-arithmetic imagination from a set of posterior start states. Rewards
// are read at each state, values come from the fast critic; continues are one
// (episodes end by length only, never by state).
struct ImaginedRollout {
  std::vector<Mat> feat;  // H+1 entries, feat_dim x B
  std::vector<Mat> u;     // H entries, pre-squash action samples
  Mat rewards;            // H x B, reward at feat[t]
  Mat values;             // (H+1) x B
  Mat cont;               // H x B, all ones
};
ImaginedRollout imagine(const rssm::WorldModel& wm, const ParamStore& wm_store,
                        const ActorCritic& acnet, const ParamStore& ac_store, const Mat& h0,
                        const Mat& z0, int horizon, RngStream& noise);

// Constraint batch: replayed coordinate histories with fresh policy actions.
struct ConstraintBatch {
  Mat feat;    // feat_dim x B, filtered features at the same timesteps
  Mat window;  // (k+1)*d_q x B
  double dt = 0.0;
};

// Mean squared action-aligned energy slope and mean directional curvature of
// the successor energy, both differentiable through the (frozen) energy model
// and the policy's reparameterized actions.
struct ConstraintTerms {
  Var c_energy, c_smooth;  // 1 x 1 means
  Var actions;             // the squashed actions used
};
ConstraintTerms constraint_terms(Tape& t, const ActorCritic& acnet, ParamBinding& ac_bind,
                                 const energy::EnergyModel& em, ParamBinding& em_bind,
                                 const ConstraintBatch& batch, const Mat& eps);

// One primal-dual update cycle: imagination statistics in, one optimizer step
// on alpha_p L_actor + alpha_v L_critic + lambda_e (C_e - eps_e)
// + lambda_s (C_s - eps_s), then the dual ascent step.
struct AcUpdateStats {
  double l_actor = 0.0, l_critic = 0.0;
  double c_energy = 0.0, c_smooth = 0.0;
  double lambda_e = 0.0, lambda_s = 0.0;
  double return_mean = 0.0, entropy = 0.0;
};

class AcLearner {
public:
  AcLearner() = default;
  AcLearner(ActorCritic net, const ParamStore& store);

  // Constraint inputs may be null when constraints are inactive; when dual is
  // inactive the whole constraint graph is skipped, leaving the update stream
  // identical to an unconstrained learner's.
  AcUpdateStats update(ParamStore& ac_store, const rssm::WorldModel& wm,
                       const ParamStore& wm_store, const Mat& h0, const Mat& z0,
                       const energy::EnergyModel* em, const ParamStore* em_store,
                       const ConstraintBatch* cbatch, RngStream& noise);

  DualState& dual() { return dual_; }
  const DualState& dual() const { return dual_; }
  ReturnScaler& scaler() { return scaler_; }
  const ParamStore& slow_store() const { return slow_; }
  nets::Adam& optimizer() { return opt_; }

  // Constraint values of the current policy on one batch, per sample; used by
  // the threshold calibration pass.
  std::pair<std::vector<double>, std::vector<double>> constraint_samples(
      const ParamStore& ac_store, const energy::EnergyModel& em, const ParamStore& em_store,
      const ConstraintBatch& batch, RngStream& noise) const;

private:
  ActorCritic net_;
  nets::Adam opt_;
  ParamStore slow_;  // EMA copy of the full store; only critic blocks are read
  DualState dual_;
  ReturnScaler scaler_;
};

}  // namespace phwm::ac
