#include <doctest.h>

#include <cmath>

#include "ac/ac.hpp"
#include "test_util.hpp"

using namespace phwm;
using namespace phwm::ac;
using ad::Mat;
using ad::Tape;
using ad::Var;
using Eigen::VectorXd;
using nets::ParamBinding;
using nets::ParamStore;

namespace {

// Independent recursion oracle: expand the lambda-return definition literally,
// one scalar at a time, without reusing the production code paths.
double lambda_return_oracle(const std::vector<double>& r, const std::vector<double>& v,
                            const std::vector<double>& c, double gamma, double lambda,
                            size_t t) {
  if (t == r.size()) return v[t];
  double tail = lambda_return_oracle(r, v, c, gamma, lambda, t + 1);
  return r[t] + gamma * c[t] * ((1.0 - lambda) * v[t + 1] + lambda * tail);
}

AcSpec tiny_ac(int feat = 6, int d_a = 1) {
  AcSpec s;
  s.feat_dim = feat;
  s.d_a = d_a;
  s.actor_hidden = {8};
  s.critic_hidden = {8};
  s.horizon = 5;
  return s;
}

rssm::WorldModelSpec tiny_wm_spec() {
  rssm::WorldModelSpec s;
  s.rssm.d_obs = 2;
  s.rssm.d_a = 1;
  s.rssm.h_dim = 10;
  s.rssm.h_phys = 4;
  s.rssm.z_dim = 3;
  s.rssm.obs_embed = 6;
  s.rssm.head_hidden = {8};
  s.ph.n = 4;
  s.ph.d_a = 1;
  s.ph.h_hidden = {8};
  return s;
}

}  // namespace

TEST_CASE("ac: lambda returns match a brute-force recursion oracle") {
  RngStream rng(mix_seed(700, "ret"));
  for (int trial = 0; trial < 500; ++trial) {
    const int H = 2 + rng.uniform_int(8);
    std::vector<double> r(H), c(H), v(H + 1);
    for (int i = 0; i < H; ++i) {
      r[i] = rng.uniform(-2, 2);
      c[i] = rng.uniform(0, 1);
    }
    for (int i = 0; i <= H; ++i) v[i] = rng.uniform(-2, 2);
    double gamma = rng.uniform(0.8, 1.0);
    double lambda = rng.uniform(0, 1);

    Mat rm(H, 1), cm(H, 1), vm(H + 1, 1);
    for (int i = 0; i < H; ++i) {
      rm(i, 0) = r[i];
      cm(i, 0) = c[i];
    }
    for (int i = 0; i <= H; ++i) vm(i, 0) = v[i];
    Mat R = lambda_returns(rm, vm, cm, gamma, lambda);
    for (int t = 0; t <= H; ++t) {
      double want = lambda_return_oracle(r, v, c, gamma, lambda, static_cast<size_t>(t));
      CHECK(R(t, 0) == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("ac: lambda return limit cases collapse as expected") {
  Mat r(3, 1), c(3, 1), v(4, 1);
  r << 1, 1, 0.5;
  c << 1, 1, 1;
  v << 0, 0, 2, 1.5;
  // lambda = 0 is the one-step TD target.
  Mat td = lambda_returns(r, v, c, 0.9, 0.0);
  CHECK(td(0, 0) == doctest::Approx(1 + 0.9 * 0.0).epsilon(1e-12));
  CHECK(td(1, 0) == doctest::Approx(1 + 0.9 * 2.0).epsilon(1e-12));
  // lambda = 1 is the discounted sum with a bootstrap tail.
  Mat mc = lambda_returns(r, v, c, 0.9, 1.0);
  CHECK(mc(0, 0) ==
        doctest::Approx(1 + 0.9 * (1 + 0.9 * (0.5 + 0.9 * 1.5))).epsilon(1e-12));
  CHECK_THROWS_AS((void)lambda_returns(Mat::Ones(1, 1), Mat::Ones(2, 1), Mat::Ones(1, 1), 0.9, 0.5),
                  Error);
}

TEST_CASE("ac: discount weights are cumulative products that die with the continue flag") {
  Mat ones = Mat::Ones(4, 1);
  Mat w = discount_weights(ones, 16);
  CHECK(w(0, 0) == doctest::Approx(0.9375).epsilon(1e-12));
  CHECK(w(1, 0) == doctest::Approx(0.87890625).epsilon(1e-12));

  Mat c = Mat::Ones(5, 1);
  c(2, 0) = 0.0;
  Mat wc = discount_weights(c, 16);
  CHECK(wc(1, 0) > 0.0);
  CHECK(wc(2, 0) == 0.0);
  CHECK(wc(4, 0) == 0.0);

  RngStream rng(mix_seed(701, "w"));
  Mat rc(6, 3);
  for (int i = 0; i < rc.size(); ++i) rc.data()[i] = rng.uniform(0, 1);
  Mat wr = discount_weights(rc, 16);
  for (int t = 1; t < 6; ++t)
    for (int b = 0; b < 3; ++b) CHECK(wr(t, b) <= wr(t - 1, b));
}

TEST_CASE("ac: return scaler clamps small ranges and tracks quantiles") {
  ReturnScaler sc;
  Mat batch(2, 3);
  batch << 0.0, 0.1, 0.2, 0.3, 0.4, 0.5;
  sc.update(batch);
  CHECK(sc.span() == 1.0);  // range 0.5 clamps up to one

  ReturnScaler wide;
  Mat spread(1, 101);
  for (int i = 0; i <= 100; ++i) spread(0, i) = static_cast<double>(i) / 10.0;  // 0..10
  wide.update(spread);
  CHECK(wide.q05 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(wide.q95 == doctest::Approx(9.5).epsilon(1e-12));
  CHECK(wide.span() == doctest::Approx(9.0).epsilon(1e-12));
  // Second update moves the EMA by (1 - decay) of the gap.
  wide.update(spread.array() + 1.0);
  CHECK(wide.q95 == doctest::Approx(0.99 * 9.5 + 0.01 * 10.5).epsilon(1e-12));
}

TEST_CASE("ac: dual ascent projects onto the nonnegative orthant") {
  DualState d;
  d.eta_lambda = 0.1;
  d.lambda_e = 0.5;
  d.eps_e = 10.0;
  d.update(0.0, 0.0);  // violation -10 on the energy side
  CHECK(d.lambda_e == 0.0);

  d = DualState{};
  d.eta_lambda = 0.1;
  d.eps_e = 2.0;
  d.update(4.0, 0.0);
  CHECK(d.lambda_e == doctest::Approx(0.2).epsilon(1e-12));
  d.update(2.0, 0.0);  // exactly at the threshold: unchanged
  CHECK(d.lambda_e == doctest::Approx(0.2).epsilon(1e-12));

  RngStream rng(mix_seed(702, "dual"));
  DualState rd;
  rd.eta_lambda = 0.05;
  for (int i = 0; i < 300; ++i) {
    rd.eps_e = rng.uniform(-1, 1);
    rd.eps_s = rng.uniform(-1, 1);
    rd.update(rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK(rd.lambda_e >= 0.0);
    CHECK(rd.lambda_s >= 0.0);
  }
}

TEST_CASE("ac: dual grows monotonically under persistent violation and parks at zero otherwise") {
  DualState d;
  d.eta_lambda = 0.01;
  d.eps_e = 1.0;
  double prev = 0.0;
  for (int i = 0; i < 50; ++i) {
    d.update(3.0, 0.0);  // persistent violation
    CHECK(d.lambda_e > prev);
    prev = d.lambda_e;
  }
  DualState s;
  s.eta_lambda = 0.01;
  s.eps_e = 1.0;
  s.lambda_e = 0.05;
  for (int i = 0; i < 50; ++i) s.update(0.2, 0.0);  // persistently satisfied
  CHECK(s.lambda_e == 0.0);
}

TEST_CASE("ac: squashed log density matches a finite-difference check of its normalizer") {
  // The density of a = tanh(u) must integrate the base Gaussian correctly:
  // compare against the analytic density evaluated with plain arithmetic.
  ParamStore store;
  RngStream rng(mix_seed(703, "init"));
  ActorCritic net = ActorCritic::create(store, rng, "ac", tiny_ac(4, 2));
  Tape t;
  Mat mean(2, 3), ls(2, 3), u(2, 3);
  RngStream rr(mix_seed(703, "x"));
  for (int i = 0; i < 6; ++i) {
    mean.data()[i] = rr.uniform(-1, 1);
    ls.data()[i] = rr.uniform(-1, 0.5);
    u.data()[i] = rr.uniform(-2, 2);
  }
  PolicyDist d{t.constant(mean), t.constant(ls)};
  Mat got = t.val(net.log_prob(t, d, t.constant(u)));
  for (int b = 0; b < 3; ++b) {
    double want = 0.0;
    for (int i = 0; i < 2; ++i) {
      double sd = std::exp(ls(i, b));
      double z = (u(i, b) - mean(i, b)) / sd;
      want += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
      want -= std::log(1.0 - std::tanh(u(i, b)) * std::tanh(u(i, b)));
    }
    CHECK(got(0, b) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("ac: actor loss is zero with zero advantage and zero entropy bonus") {
  ParamStore store;
  RngStream rng(mix_seed(704, "init"));
  ActorCritic net = ActorCritic::create(store, rng, "ac", tiny_ac());
  Tape t;
  ParamBinding bind(t, store);
  Mat feat = Mat::Random(6, 8), u = Mat::Random(1, 8);
  auto parts = actor_loss(t, net, bind, feat, u, Mat::Zero(1, 8), Mat::Ones(1, 8), 0.0);
  CHECK(t.scalar(parts.loss) == 0.0);
  auto g = bind.grad_flat(parts.loss);
  double norm = 0;
  for (double x : g) norm += x * x;
  CHECK(norm == 0.0);

  // Zero weights also kill the loss regardless of advantages.
  auto parts2 = actor_loss(t, net, bind, feat, u, Mat::Random(1, 8), Mat::Zero(1, 8), 0.5);
  CHECK(t.scalar(parts2.loss) == 0.0);
}

TEST_CASE("ac: entropy bonus alone widens the policy") {
  ParamStore store;
  RngStream rng(mix_seed(705, "init"));
  ActorCritic net = ActorCritic::create(store, rng, "ac", tiny_ac());
  Mat feat = Mat::Random(6, 16), u = Mat::Random(1, 16);
  double before = net.actor_plain(store, feat).bottomRows(1).mean();
  nets::Adam opt(1e-2);
  for (int it = 0; it < 50; ++it) {
    Tape t;
    ParamBinding bind(t, store);
    auto parts = actor_loss(t, net, bind, feat, u, Mat::Zero(1, 16), Mat::Ones(1, 16), 0.1);
    opt.step(store, bind.grad_flat(parts.loss));
  }
  double after = net.actor_plain(store, feat).bottomRows(1).mean();
  CHECK(after > before);
}

TEST_CASE("ac: critic loss bottoms out at the two Gaussian floors") {
  ParamStore store;
  RngStream rng(mix_seed(706, "init"));
  ActorCritic net = ActorCritic::create(store, rng, "ac", tiny_ac());
  Mat feat = Mat::Random(6, 5);
  Mat v = net.critic_plain(store, feat);
  Tape t;
  ParamBinding bind(t, store);
  // Both targets equal to the current output: only the normalization constants remain.
  Var l = critic_loss(t, net, bind, feat, v, v, Mat::Ones(1, 5));
  CHECK(t.scalar(l) == doctest::Approx(std::log(2.0 * M_PI)).epsilon(1e-12));
  Var l0 = critic_loss(t, net, bind, feat, v, v, Mat::Zero(1, 5));
  CHECK(t.scalar(l0) == 0.0);
}

TEST_CASE("ac: constraint terms reproduce analytic oracles through the energy model") {
  // Oracle energy model: H_next quadratic in the action lets both constraint
  // values be computed by hand. With G constant, dt small, H_next ~ H(q, p + dt G a).
  ParamStore em_store;
  RngStream rng(mix_seed(707, "em"));
  energy::EnergySpec es;
  es.d_q = 2;
  es.d_a = 2;
  es.k = 2;
  es.tcn_channels = 4;
  es.hidden = {6};
  es.enc_hidden = 4;
  energy::EnergyModel em = energy::EnergyModel::create(em_store, rng, "em", es);

  ParamStore ac_store;
  RngStream rng2(mix_seed(707, "ac"));
  AcSpec as = tiny_ac(4, 2);
  ActorCritic net = ActorCritic::create(ac_store, rng2, "ac", as);

  ConstraintBatch batch;
  batch.feat = Mat::Random(4, 6);
  batch.window = Mat::Random(6, 6);  // (k+1)*d_q = 6 rows
  batch.dt = 0.05;

  Tape t;
  ParamBinding ac_bind(t, ac_store);
  ParamBinding em_bind(t, em_store, false);
  Mat eps = Mat::Zero(2, 6);
  ConstraintTerms ct = constraint_terms(t, net, ac_bind, em, em_bind, batch, eps);

  // Finite-difference oracle along the sampled action directions.
  Mat a = t.val(ct.actions);
  double ce_want = 0.0, cs_want = 0.0;
  for (int b = 0; b < 6; ++b) {
    VectorXd ab = a.col(b);
    VectorXd wb = batch.window.col(b);
    auto h_at = [&](const VectorXd& av) {
      return em.predict_next_energy_raw(em_store, wb, av, batch.dt);
    };
    VectorXd g = testutil::fd_grad(h_at, ab);
    double slope = g.dot(ab);
    ce_want += slope * slope / 6.0;
    double hstep = 1e-4;
    double quad = (h_at(ab + hstep * ab) - 2.0 * h_at(ab) + h_at(ab - hstep * ab)) /
                  (hstep * hstep);
    cs_want += quad / 6.0;
  }
  CHECK(std::abs(t.scalar(ct.c_energy) - ce_want) <
        1e-5 * std::max(1.0, std::abs(ce_want)));
  CHECK(std::abs(t.scalar(ct.c_smooth) - cs_want) <
        1e-3 * std::max(1.0, std::abs(cs_want)));

  // The frozen energy model must receive no gradient at all.
  ParamBinding em_check(t, em_store, false);
  CHECK(!em_check.trainable());
  auto g_ac = ac_bind.grad_flat(t.add(ct.c_energy, ct.c_smooth));
  double nrm = 0;
  for (double x : g_ac) nrm += x * x;
  CHECK(nrm > 0.0);  // actions do steer the constraints
}

TEST_CASE("ac: learner runs and an inactive dual skips the constraint graph bitwise") {
  auto run = [](bool provide_constraints, double eta) {
    ParamStore wm_store;
    RngStream wr(mix_seed(708, "wm"));
    rssm::WorldModel wm = rssm::WorldModel::create(wm_store, wr, "wm", tiny_wm_spec());

    ParamStore em_store;
    RngStream er(mix_seed(708, "em"));
    energy::EnergySpec es;
    es.d_q = 1;
    es.d_a = 1;
    es.k = 2;
    es.tcn_channels = 4;
    es.hidden = {6};
    es.enc_hidden = 4;
    energy::EnergyModel em = energy::EnergyModel::create(em_store, er, "em", es);

    ParamStore ac_store;
    RngStream ar(mix_seed(708, "ac"));
    AcSpec as = tiny_ac(13, 1);  // feat = h_dim + z_dim
    ActorCritic net = ActorCritic::create(ac_store, ar, "ac", as);
    AcLearner learner(net, ac_store);
    learner.dual().eta_lambda = eta;

    RngStream fill(mix_seed(708, "fill"));
    auto rand_mat = [&](int r, int c) {
      Mat m(r, c);
      for (int i = 0; i < m.size(); ++i) m.data()[i] = fill.uniform(-1, 1);
      return m;
    };
    ConstraintBatch cb;
    cb.feat = rand_mat(13, 4);
    cb.window = rand_mat(3, 4);
    cb.dt = 0.05;

    RngStream noise(mix_seed(708, "noise"));
    Mat h0 = rand_mat(10, 6), z0 = rand_mat(3, 6);
    for (int it = 0; it < 4; ++it) {
      if (provide_constraints)
        learner.update(ac_store, wm, wm_store, h0, z0, &em, &em_store, &cb, noise);
      else
        learner.update(ac_store, wm, wm_store, h0, z0, nullptr, nullptr, nullptr, noise);
    }
    return ac_store.values();
  };
  // Inactive dual with a wired-up constraint path must equal the plain learner.
  auto plain = run(false, 0.0);
  auto wired = run(true, 0.0);
  CHECK(plain == wired);
  // An active dual with violations changes the trajectory.
  auto active = run(true, 0.5);
  CHECK(plain != active);
}

TEST_CASE("ac: slow critic starts as a copy and lags the fast one") {
  ParamStore wm_store;
  RngStream wr(mix_seed(709, "wm"));
  rssm::WorldModel wm = rssm::WorldModel::create(wm_store, wr, "wm", tiny_wm_spec());
  ParamStore ac_store;
  RngStream ar(mix_seed(709, "ac"));
  ActorCritic net = ActorCritic::create(ac_store, ar, "ac", tiny_ac(13, 1));
  AcLearner learner(net, ac_store);
  CHECK(learner.slow_store().values() == ac_store.values());

  RngStream noise(mix_seed(709, "noise"));
  Mat h0 = Mat::Random(10, 4), z0 = Mat::Random(3, 4);
  learner.update(ac_store, wm, wm_store, h0, z0, nullptr, nullptr, nullptr, noise);
  CHECK(learner.slow_store().values() != ac_store.values());
  // One EMA step: slow = decay*old + (1-decay)*new for every entry.
  const auto& sv = learner.slow_store().values();
  const auto& fv = ac_store.values();
  bool lagging = false;
  for (size_t i = 0; i < sv.size(); ++i)
    if (std::abs(sv[i] - fv[i]) > 1e-12) lagging = true;
  CHECK(lagging);
}

TEST_CASE("ac: imagined rollouts are finite and reward-consistent") {
  ParamStore wm_store;
  RngStream wr(mix_seed(710, "wm"));
  rssm::WorldModel wm = rssm::WorldModel::create(wm_store, wr, "wm", tiny_wm_spec());
  ParamStore ac_store;
  RngStream ar(mix_seed(710, "ac"));
  ActorCritic net = ActorCritic::create(ac_store, ar, "ac", tiny_ac(13, 1));

  RngStream noise(mix_seed(710, "noise"));
  Mat h0 = Mat::Random(10, 5), z0 = Mat::Random(3, 5);
  ImaginedRollout roll = imagine(wm, wm_store, net, ac_store, h0, z0, 7, noise);
  CHECK(roll.feat.size() == 8);
  CHECK(roll.u.size() == 7);
  CHECK(roll.rewards.rows() == 7);
  CHECK(roll.values.rows() == 8);
  // Reward at step 0 is the head's value at the start state.
  Mat r0 = wm.rssm().reward_plain(wm_store, h0, z0);
  CHECK((roll.rewards.row(0) - r0.row(0)).cwiseAbs().maxCoeff() == 0.0);
  // Actions stay strictly inside the squash bounds.
  for (const auto& u : roll.u) CHECK(u.array().tanh().abs().maxCoeff() < 1.0);
}
