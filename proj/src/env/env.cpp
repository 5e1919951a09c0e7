#include "env/env.hpp"

#include <cmath>

#include "core/error.hpp"

namespace phwm::env {

double Env::constant(const std::string& key, double fallback) const {
  auto it = spec_.constants.find(key);
  return it == spec_.constants.end() ? fallback : it->second;
}

StepRecord Env::step(VectorXd& q, VectorXd& qdot, const VectorXd& a_unit, double t) const {
  require(a_unit.size() == da(), ErrorKind::Dimension, "env step: action dim mismatch");
  require(spec_.substeps >= 10, ErrorKind::Config,
          "env step: at least 10 integrator substeps required");

  VectorXd a = a_unit.cwiseMax(-1.0).cwiseMin(1.0);
  VectorXd tau = a * action_limit();

  StepRecord rec;
  rec.t = t;
  rec.q = q;
  rec.qdot = qdot;
  rec.a = a;
  rec.tau = tau;
  rec.r = reward(q, qdot);
  rec.e_true = energy(q, qdot);
  VectorXd qacc(dq());
  accel(q, qdot, tau, qacc);
  rec.qacc = qacc;

  const double h = spec_.dt / spec_.substeps;
  for (int s = 0; s < spec_.substeps; ++s) {
    accel(q, qdot, tau, qacc);
    qdot += h * qacc;   // velocity first: symplectic for separable systems
    q += h * qdot;
  }
  require(q.allFinite() && qdot.allFinite(), ErrorKind::Numerical,
          "env step: state diverged during integration");
  return rec;
}

namespace {

// Torque-driven pendulum, angle measured from the hanging position.
class Pendulum final : public Env {
public:
  explicit Pendulum(EnvSpec spec) : Env(std::move(spec)) {
    m_ = constant("m", 1.0);
    l_ = constant("l", 1.0);
    g_ = constant("g", 9.81);
    b_ = constant("b", 0.05);
    tau_max_ = constant("tau_max", 2.0);
  }
  int dq() const override { return 1; }
  int da() const override { return 1; }
  double action_limit() const override { return tau_max_; }

  void accel(const VectorXd& q, const VectorXd& qdot, const VectorXd& tau,
             VectorXd& qacc) const override {
    qacc[0] = (tau[0] - b_ * qdot[0] - m_ * g_ * l_ * std::sin(q[0])) / (m_ * l_ * l_);
  }
  double reward(const VectorXd& q, const VectorXd& qdot) const override {
    // 1 when inverted, 0 when hanging; the velocity factor discourages spinning
    // through the top instead of balancing.
    return 0.5 * (1.0 - std::cos(q[0])) / (1.0 + 0.02 * qdot[0] * qdot[0]);
  }
  double energy(const VectorXd& q, const VectorXd& qdot) const override {
    return 0.5 * m_ * l_ * l_ * qdot[0] * qdot[0] + m_ * g_ * l_ * (1.0 - std::cos(q[0]));
  }
  VectorXd momentum(const VectorXd&, const VectorXd& qdot) const override {
    VectorXd p(1);
    p[0] = m_ * l_ * l_ * qdot[0];
    return p;
  }
  void sample_init(RngStream& rng, VectorXd& q, VectorXd& qdot) const override {
    q.resize(1);
    qdot.resize(1);
    q[0] = rng.uniform(-0.1, 0.1);
    qdot[0] = rng.uniform(-0.05, 0.05);
  }

private:
  double m_, l_, g_, b_, tau_max_;
};

// Forced mass on a spring with viscous damping, tracking a fixed setpoint.
class MassSpring final : public Env {
public:
  explicit MassSpring(EnvSpec spec) : Env(std::move(spec)) {
    m_ = constant("m", 1.0);
    k_ = constant("k", 2.0);
    c_ = constant("c", 0.1);
    f_max_ = constant("f_max", 1.0);
    target_ = constant("target", 0.4);
  }
  int dq() const override { return 1; }
  int da() const override { return 1; }
  double action_limit() const override { return f_max_; }

  void accel(const VectorXd& q, const VectorXd& qdot, const VectorXd& tau,
             VectorXd& qacc) const override {
    qacc[0] = (tau[0] - k_ * q[0] - c_ * qdot[0]) / m_;
  }
  double reward(const VectorXd& q, const VectorXd&) const override {
    double d = q[0] - target_;
    return std::exp(-4.0 * d * d);
  }
  double energy(const VectorXd& q, const VectorXd& qdot) const override {
    return 0.5 * m_ * qdot[0] * qdot[0] + 0.5 * k_ * q[0] * q[0];
  }
  VectorXd momentum(const VectorXd&, const VectorXd& qdot) const override {
    VectorXd p(1);
    p[0] = m_ * qdot[0];
    return p;
  }
  void sample_init(RngStream& rng, VectorXd& q, VectorXd& qdot) const override {
    q.resize(1);
    qdot.resize(1);
    q[0] = rng.uniform(-0.1, 0.1);
    qdot[0] = rng.uniform(-0.05, 0.05);
  }

private:
  double m_, k_, c_, f_max_, target_;
};

// Cart with a point-mass pole, force applied to the cart, pole angle measured
// from upright. q = [x, theta].
class Cartpole final : public Env {
public:
  explicit Cartpole(EnvSpec spec) : Env(std::move(spec)) {
    mc_ = constant("m_cart", 1.0);
    mp_ = constant("m_pole", 0.1);
    l_ = constant("l", 0.5);
    g_ = constant("g", 9.81);
    bx_ = constant("b_cart", 0.05);
    bth_ = constant("b_pole", 0.01);
    f_max_ = constant("f_max", 5.0);
  }
  int dq() const override { return 2; }
  int da() const override { return 1; }
  double action_limit() const override { return f_max_; }

  void accel(const VectorXd& q, const VectorXd& qdot, const VectorXd& tau,
             VectorXd& qacc) const override {
    const double th = q[1], xd = qdot[0], thd = qdot[1];
    const double s = std::sin(th), c = std::cos(th);
    const double denom = mc_ + mp_ * s * s;
    const double xacc =
        (tau[0] - bx_ * xd + mp_ * s * (l_ * thd * thd - g_ * c) + bth_ * thd * c / l_) / denom;
    const double thacc = (g_ * s - xacc * c) / l_ - bth_ * thd / (mp_ * l_ * l_);
    qacc[0] = xacc;
    qacc[1] = thacc;
  }
  double reward(const VectorXd& q, const VectorXd&) const override {
    return 0.5 * (1.0 + std::cos(q[1])) * std::exp(-0.1 * q[0] * q[0]);
  }
  double energy(const VectorXd& q, const VectorXd& qdot) const override {
    const double xd = qdot[0], thd = qdot[1], c = std::cos(q[1]);
    double kinetic = 0.5 * (mc_ + mp_) * xd * xd + mp_ * l_ * xd * thd * c +
                     0.5 * mp_ * l_ * l_ * thd * thd;
    double potential = mp_ * g_ * l_ * (1.0 + c);  // zero when the pole hangs at rest
    return kinetic + potential;
  }
  VectorXd momentum(const VectorXd& q, const VectorXd& qdot) const override {
    const double c = std::cos(q[1]);
    VectorXd p(2);
    p[0] = (mc_ + mp_) * qdot[0] + mp_ * l_ * qdot[1] * c;
    p[1] = mp_ * l_ * qdot[0] * c + mp_ * l_ * l_ * qdot[1];
    return p;
  }
  void sample_init(RngStream& rng, VectorXd& q, VectorXd& qdot) const override {
    q.resize(2);
    qdot.resize(2);
    q[0] = rng.uniform(-0.05, 0.05);
    q[1] = rng.uniform(-0.08, 0.08);
    qdot[0] = rng.uniform(-0.02, 0.02);
    qdot[1] = rng.uniform(-0.02, 0.02);
  }

private:
  double mc_, mp_, l_, g_, bx_, bth_, f_max_;
};

}  // namespace

std::unique_ptr<Env> make_env(const EnvSpec& spec) {
  if (spec.name == "pendulum") return std::make_unique<Pendulum>(spec);
  if (spec.name == "mass_spring") return std::make_unique<MassSpring>(spec);
  if (spec.name == "cartpole") return std::make_unique<Cartpole>(spec);
  raise(ErrorKind::Config, "unknown environment '" + spec.name + "'");
}

std::vector<StepRecord> rollout(const Env& e, RngStream& init_rng, const PolicyFn& policy) {
  VectorXd q, qdot;
  e.sample_init(init_rng, q, qdot);
  std::vector<StepRecord> ep;
  ep.reserve(static_cast<size_t>(e.spec().episode_len));
  for (int t = 0; t < e.spec().episode_len; ++t) {
    VectorXd a = policy(q, qdot, t);
    ep.push_back(e.step(q, qdot, a, t * e.spec().dt));
  }
  if (!ep.empty()) ep.back().done = true;
  return ep;
}

PolicyFn random_hold_policy(RngStream& rng, int da) {
  auto held = std::make_shared<VectorXd>(VectorXd::Zero(da));
  auto remaining = std::make_shared<int>(0);
  return [&rng, da, held, remaining](const VectorXd&, const VectorXd&, int) {
    if (*remaining <= 0) {
      *remaining = 3 + rng.uniform_int(6);
      for (int i = 0; i < da; ++i) (*held)[i] = rng.uniform(-1.0, 1.0);
    }
    --(*remaining);
    return *held;
  };
}

double torque_energy_cost(const std::vector<StepRecord>& ep, double alpha, double beta,
                          double dt) {
  double mech = 0.0, quad = 0.0;
  for (const auto& s : ep) {
    mech += s.tau.cwiseProduct(s.qdot).cwiseAbs().sum() * dt;
    quad += s.tau.squaredNorm() * dt;
  }
  return alpha * mech + beta * quad;
}

double mean_squared_jerk(const std::vector<StepRecord>& ep, double dt) {
  require(ep.size() >= 2, ErrorKind::InsufficientData,
          "mean squared jerk: need at least two steps");
  const auto n_dof = static_cast<double>(ep.front().qacc.size());
  double acc = 0.0;
  for (size_t t = 1; t < ep.size(); ++t)
    acc += ((ep[t].qacc - ep[t - 1].qacc) / dt).squaredNorm();
  return acc / (static_cast<double>(ep.size() - 1) * n_dof);
}

}  // namespace phwm::env
