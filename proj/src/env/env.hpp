#pragma once
#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "core/rng.hpp"

namespace phwm::env {

using Eigen::VectorXd;

// One recorded control step. State fields describe the moment BEFORE the action
// was applied; qacc is the equation of motion evaluated at that state with the
// applied torque, and r is the reward attached to being in that state.
struct StepRecord {
  double t = 0.0;
  VectorXd q, qdot, qacc, tau, a;
  double r = 0.0;
  bool done = false;
  double e_true = 0.0;
};

struct EnvSpec {
  std::string name = "pendulum";  // pendulum | mass_spring | cartpole
  double dt = 0.05;               // control interval
  int substeps = 100;             // integrator substeps per control step
  int episode_len = 200;
  std::map<std::string, double> constants;  // overrides of the built-in physics constants
};

class Env {
public:
  virtual ~Env() = default;

  virtual int dq() const = 0;
  virtual int da() const = 0;
  // Per-dimension magnitude bound on the physical actuation; policies emit
  // normalized actions in [-1, 1] which are scaled by this.
  virtual double action_limit() const = 0;

  virtual void accel(const VectorXd& q, const VectorXd& qdot, const VectorXd& tau,
                     VectorXd& qacc) const = 0;
  virtual double reward(const VectorXd& q, const VectorXd& qdot) const = 0;
  virtual double energy(const VectorXd& q, const VectorXd& qdot) const = 0;
  // Conjugate momenta of the physical model; used as supervision oracles.
  virtual VectorXd momentum(const VectorXd& q, const VectorXd& qdot) const = 0;
  virtual void sample_init(RngStream& rng, VectorXd& q, VectorXd& qdot) const = 0;

  const EnvSpec& spec() const { return spec_; }

  // Applies one control step with semi-implicit Euler substeps, advancing q and
  // qdot in place. Returns the record for the pre-step state.
  StepRecord step(VectorXd& q, VectorXd& qdot, const VectorXd& a_unit, double t) const;

protected:
  explicit Env(EnvSpec spec) : spec_(std::move(spec)) {}
  double constant(const std::string& key, double fallback) const;
  EnvSpec spec_;
};

std::unique_ptr<Env> make_env(const EnvSpec& spec);

// Policy hook for rollouts: maps (q, qdot, step index) to a normalized action.
using PolicyFn = std::function<VectorXd(const VectorXd&, const VectorXd&, int)>;

// Runs one full episode. The final record carries done = true as an episode
// boundary marker; rewards themselves never terminate an episode.
std::vector<StepRecord> rollout(const Env& e, RngStream& init_rng, const PolicyFn& policy);

// Piecewise-constant random actions: each hold lasts 3..8 steps with a value
// drawn uniformly, which excites a much wider energy band than per-step noise.
PolicyFn random_hold_policy(RngStream& rng, int da);

// Actuation-cost and smoothness metrics over one episode.
double torque_energy_cost(const std::vector<StepRecord>& ep, double alpha, double beta, double dt);
double mean_squared_jerk(const std::vector<StepRecord>& ep, double dt);

}  // namespace phwm::env
