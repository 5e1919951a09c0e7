#include <doctest.h>

#include <cmath>

#include "rssm/wm.hpp"
#include "test_util.hpp"

using namespace phwm;
using namespace phwm::rssm;
using ad::Mat;
using ad::Tape;
using ad::Var;
using Eigen::VectorXd;
using nets::ParamBinding;
using nets::ParamStore;

namespace {

RssmSpec tiny_rssm(int d_obs = 2, int d_a = 1) {
  RssmSpec s;
  s.d_obs = d_obs;
  s.d_a = d_a;
  s.h_dim = 12;
  s.h_phys = 4;
  s.z_dim = 3;
  s.obs_embed = 6;
  s.head_hidden = {8};
  return s;
}

WorldModelSpec tiny_wm() {
  WorldModelSpec s;
  s.rssm = tiny_rssm();
  s.ph.n = 4;
  s.ph.d_a = 1;
  s.ph.h_hidden = {8};
  s.dt = 0.05;
  return s;
}

std::vector<env::StepRecord> sine_episode(int len, double phase, uint64_t seed) {
  // Cheap synthetic dynamics so replay and world-model tests need no simulator.
  RngStream rng(mix_seed(seed, "sine"));
  std::vector<env::StepRecord> ep(len);
  for (int t = 0; t < len; ++t) {
    auto& r = ep[t];
    r.t = 0.05 * t;
    r.q = VectorXd::Constant(1, std::sin(0.3 * t + phase));
    r.qdot = VectorXd::Constant(1, 0.3 * std::cos(0.3 * t + phase));
    r.qacc = VectorXd::Zero(1);
    r.a = VectorXd::Constant(1, rng.uniform(-1, 1));
    r.tau = r.a;
    r.r = 0.5 + 0.5 * std::sin(0.3 * t + phase);
    r.done = t == len - 1;
    r.e_true = 0.0;
  }
  return ep;
}

std::vector<Mat> zero_eps(const RssmSpec& s, int T, int B) {
  return std::vector<Mat>(T, Mat::Zero(s.z_dim, B));
}

std::vector<Mat> draw_eps(const RssmSpec& s, int T, int B, RngStream& rng) {
  std::vector<Mat> eps(T, Mat(s.z_dim, B));
  for (auto& e : eps)
    for (int i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
  return eps;
}

}  // namespace

TEST_CASE("replay: fifo eviction keeps the step budget and the newest episodes") {
  ReplayBuffer buf(100);
  for (int i = 0; i < 10; ++i) buf.add_episode(sine_episode(30, 0.1 * i, 500 + i));
  CHECK(buf.steps() <= 100);
  CHECK(buf.episode_count() == 3);
  // Newest episode must survive even with a budget smaller than one episode.
  ReplayBuffer small(10);
  small.add_episode(sine_episode(30, 0.0, 510));
  CHECK(small.steps() == 30);
  CHECK(small.episode_count() == 1);
}

TEST_CASE("replay: sampled sequences are contiguous slices of stored episodes") {
  ReplayBuffer buf(1000);
  buf.add_episode(sine_episode(40, 0.0, 501));
  buf.add_episode(sine_episode(25, 1.0, 502));
  RngStream rng(mix_seed(501, "sample"));
  for (int trial = 0; trial < 50; ++trial) {
    auto seq = buf.sample_sequence(rng, 8);
    REQUIRE(seq.size() == 8);
    for (int t = 1; t < 8; ++t)
      CHECK(seq[t].t == doctest::Approx(seq[t - 1].t + 0.05).epsilon(1e-12));
  }
  CHECK_THROWS_AS((void)buf.sample_sequence(rng, 64), Error);
}

TEST_CASE("replay: window samples carry history oldest first plus the successor") {
  ReplayBuffer buf(1000);
  buf.add_episode(sine_episode(30, 0.4, 503));
  RngStream rng(mix_seed(503, "win"));
  for (int trial = 0; trial < 30; ++trial) {
    WindowSample s = buf.sample_window(rng, 4);
    REQUIRE(s.window.size() == 5);
    CHECK(s.window[4] == s.now.q[0]);
    CHECK(s.next.t == doctest::Approx(s.now.t + 0.05).epsilon(1e-12));
    // Window positions must be consecutive samples of the stored trajectory.
    for (int i = 0; i < 4; ++i) {
      double expect = std::sin(0.3 * (s.now.t / 0.05 - 4 + i + 1) + 0.4);
      CHECK(s.window[i + 1] == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("replay: observation statistics match a direct two-pass computation") {
  ReplayBuffer buf(1000);
  buf.add_episode(sine_episode(50, 0.0, 504));
  buf.add_episode(sine_episode(50, 2.0, 505));
  ObsStats st = buf.obs_stats();
  double sum = 0, sq = 0;
  int n = 0;
  for (size_t e = 0; e < buf.episode_count(); ++e)
    for (const auto& r : buf.episode(e)) {
      sum += r.q[0];
      sq += r.q[0] * r.q[0];
      ++n;
    }
  double mean = sum / n;
  CHECK(st.mean[0] == doctest::Approx(mean).epsilon(1e-12));
  CHECK(st.std[0] == doctest::Approx(std::sqrt(sq / n - mean * mean)).epsilon(1e-9));
  VectorXd o = st.normalize(buf.episode(0)[3].q, buf.episode(0)[3].qdot);
  CHECK(o.size() == 2);
  CHECK(std::abs(o[0]) < 10.0);
}

TEST_CASE("rssm: recurrent step with zeroed weights lands on the gate fixed point") {
  ParamStore store;
  RngStream rng(mix_seed(600, "init"));
  Rssm m = Rssm::create(store, rng, "wm.rssm", tiny_rssm());
  for (int i = 0; i < store.block_count(); ++i)
    if (store.block(i).name.rfind("wm.rssm.gru.", 0) == 0) store.view(i).setZero();

  Tape t;
  ParamBinding bind(t, store);
  Mat h0 = Mat::Constant(12, 2, 0.7);
  Var h1 = m.recurrent_step(t, bind, t.constant(h0), t.constant(Mat::Ones(3, 2)),
                            t.constant(Mat::Ones(1, 2)));
  // All gates see zero pre-activations: u = 0.5, c = 0, so h' = 0.5 h.
  CHECK((t.val(h1) - 0.5 * h0).cwiseAbs().maxCoeff() < 1e-15);

  Var h1b = m.recurrent_step(t, bind, t.constant(h0), t.constant(Mat::Ones(3, 2)),
                             t.constant(Mat::Ones(1, 2)));
  CHECK((t.val(h1b) - t.val(h1)).norm() == 0.0);  // determinism
}

TEST_CASE("rssm: zeroed posterior head gives mean zero and log-std equal to its bias") {
  ParamStore store;
  RngStream rng(mix_seed(601, "init"));
  RssmSpec spec = tiny_rssm();
  Rssm m = Rssm::create(store, rng, "wm.rssm", spec);
  for (int i = 0; i < store.block_count(); ++i)
    if (store.block(i).name.rfind("wm.rssm.post.", 0) == 0) store.view(i).setZero();
  // Last-layer bias rows z_dim..2z_dim hold the raw log-std.
  auto bias = store.view(store.id("wm.rssm.post.b1"));
  bias.block(spec.z_dim, 0, spec.z_dim, 1).setConstant(0.3);

  Tape t;
  ParamBinding bind(t, store);
  Gauss g = m.posterior(t, bind, t.constant(Mat::Random(12, 4)), t.constant(Mat::Random(2, 4)));
  CHECK(t.val(g.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((t.val(g.log_std).array() - 0.3).abs().maxCoeff() == 0.0);

  // Zero noise reproduces the mean exactly.
  Var z = m.sample(t, g, t.constant(Mat::Zero(spec.z_dim, 4)));
  CHECK((t.val(z) - t.val(g.mean)).norm() == 0.0);
}

TEST_CASE("rssm: sample moments over many draws match the distribution parameters") {
  ParamStore store;
  RngStream rng(mix_seed(602, "init"));
  RssmSpec spec = tiny_rssm();
  Rssm m = Rssm::create(store, rng, "wm.rssm", spec);

  const int N = 100000;
  Tape t;
  Mat mean = Mat::Zero(spec.z_dim, N), ls = Mat::Zero(spec.z_dim, N);
  mean.row(0).setConstant(0.8);
  mean.row(1).setConstant(-1.2);
  ls.row(0).setConstant(std::log(0.5));
  ls.row(1).setConstant(std::log(1.7));
  Gauss g{t.constant(mean), t.constant(ls)};
  RngStream noise(mix_seed(602, "noise"));
  Mat eps(spec.z_dim, N);
  for (int i = 0; i < eps.size(); ++i) eps.data()[i] = noise.normal();
  Mat z = t.val(m.sample(t, g, t.constant(eps)));
  for (int d : {0, 1}) {
    double mu = z.row(d).mean();
    double sd = std::sqrt((z.row(d).array() - mu).square().mean());
    double want_mu = mean(d, 0), want_sd = std::exp(ls(d, 0));
    CHECK(std::abs(mu - want_mu) < 0.01 * std::max(1.0, std::abs(want_mu)));
    CHECK(std::abs(sd - want_sd) / want_sd < 0.01);
  }
}

TEST_CASE("rssm: divergence closed forms and nonnegativity") {
  ParamStore store;
  RngStream rng(mix_seed(603, "init"));
  RssmSpec spec = tiny_rssm();
  Rssm m = Rssm::create(store, rng, "wm.rssm", spec);
  Tape t;

  Gauss same{t.constant(Mat::Random(3, 5)), t.constant(Mat::Random(3, 5))};
  CHECK(t.val(m.kl(t, same, same)).cwiseAbs().maxCoeff() < 1e-14);

  // Unit-variance Gaussians one apart: half a nat per dimension.
  Gauss a{t.constant(Mat::Zero(3, 2)), t.constant(Mat::Zero(3, 2))};
  Gauss b{t.constant(Mat::Ones(3, 2)), t.constant(Mat::Zero(3, 2))};
  Mat kl = t.val(m.kl(t, a, b));
  CHECK(kl(0, 0) == doctest::Approx(1.5).epsilon(1e-12));  // 0.5 per dim, 3 dims

  RngStream rr(mix_seed(603, "pairs"));
  for (int trial = 0; trial < 200; ++trial) {
    Mat ma(3, 1), mb(3, 1), la(3, 1), lb(3, 1);
    for (int i = 0; i < 3; ++i) {
      ma(i, 0) = rr.uniform(-3, 3);
      mb(i, 0) = rr.uniform(-3, 3);
      la(i, 0) = rr.uniform(-2, 1);
      lb(i, 0) = rr.uniform(-2, 1);
    }
    Gauss ga{t.constant(ma), t.constant(la)}, gb{t.constant(mb), t.constant(lb)};
    CHECK(t.val(m.kl(t, ga, gb))(0, 0) >= 0.0);
  }
}

TEST_CASE("rssm: balanced divergence trains each side by its configured share") {
  ParamStore store;
  RngStream rng(mix_seed(604, "init"));
  Rssm m = Rssm::create(store, rng, "wm.rssm", tiny_rssm());
  Tape t;
  Var pm = t.leaf(Mat::Constant(3, 1, 0.4));
  Var pl = t.leaf(Mat::Constant(3, 1, -0.1));
  Var qm = t.leaf(Mat::Constant(3, 1, -0.2));
  Var ql = t.leaf(Mat::Constant(3, 1, 0.2));
  Gauss post{pm, pl}, prior{qm, ql};
  Var bal = t.sum(m.balanced_kl(t, post, prior));
  Var plain = t.sum(m.kl(t, post, prior));
  CHECK(t.scalar(bal) == doctest::Approx(t.scalar(plain)).epsilon(1e-12));

  // Gradients: the posterior side carries (1 - balance), the prior side balance.
  auto g_bal = t.gradient(bal, {pm, qm});
  auto g_plain = t.gradient(plain, {pm, qm});
  double ratio_post = t.val(g_bal[0])(0, 0) / t.val(g_plain[0])(0, 0);
  double ratio_prior = t.val(g_bal[1])(0, 0) / t.val(g_plain[1])(0, 0);
  CHECK(ratio_post == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(ratio_prior == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("wm: loss parts satisfy the composition identity") {
  ParamStore store;
  RngStream rng(mix_seed(605, "init"));
  WorldModel m = WorldModel::create(store, rng, "wm", tiny_wm());

  ReplayBuffer buf(1000);
  for (int i = 0; i < 4; ++i) buf.add_episode(sine_episode(30, 0.5 * i, 520 + i));
  ObsStats st = buf.obs_stats();
  RngStream sample(mix_seed(605, "sample"));
  SequenceBatch batch = make_sequence_batch(buf, sample, 6, 3, st);
  RngStream noise(mix_seed(605, "noise"));
  auto eps = draw_eps(m.spec().rssm, 6, 3, noise);

  Tape t;
  ParamBinding bind(t, store);
  WmLoss l = m.sequence_loss(t, bind, batch, eps, 0.7);
  double want = t.scalar(l.recon) + t.scalar(l.divergence) + t.scalar(l.reward) +
                0.7 * t.scalar(l.ph);
  CHECK(t.scalar(l.total) == doctest::Approx(want).epsilon(1e-12));
  CHECK(t.scalar(l.divergence) >= m.spec().rssm.free_bits);
}

TEST_CASE("wm: physics branch sends no gradient into the recurrent cell") {
  ParamStore store;
  RngStream rng(mix_seed(606, "init"));
  WorldModel m = WorldModel::create(store, rng, "wm", tiny_wm());

  ReplayBuffer buf(1000);
  for (int i = 0; i < 3; ++i) buf.add_episode(sine_episode(25, 0.7 * i, 530 + i));
  ObsStats st = buf.obs_stats();
  RngStream sample(mix_seed(606, "sample"));
  SequenceBatch batch = make_sequence_batch(buf, sample, 5, 2, st);
  auto eps = zero_eps(m.spec().rssm, 5, 2);

  Tape t;
  ParamBinding bind(t, store);
  WmLoss l = m.sequence_loss(t, bind, batch, eps, 1.0);
  auto g_ph_v = bind.grad_flat(l.ph);
  auto g_total_v = bind.grad_flat(l.total);
  Eigen::Map<const VectorXd> g_ph(g_ph_v.data(), static_cast<Eigen::Index>(g_ph_v.size()));

  bool ph_touches_field = false;
  for (int i = 0; i < store.block_count(); ++i) {
    const auto& blk = store.block(i);
    VectorXd seg = g_ph.segment(blk.offset, blk.rows * blk.cols);
    bool gru = blk.name.rfind("wm.rssm.", 0) == 0;
    if (gru) {
      CHECK(seg.norm() == 0.0);  // detached: nothing reaches the recurrence
    } else if (seg.norm() > 0) {
      ph_touches_field = true;
    }
  }
  CHECK(ph_touches_field);
  CHECK(g_total_v.size() == g_ph_v.size());
}

TEST_CASE("wm: zero regularizer weight reproduces the plain objective bitwise") {
  auto run = [](double lambda) {
    ParamStore store;
    RngStream rng(mix_seed(607, "init"));
    WorldModel m = WorldModel::create(store, rng, "wm", tiny_wm());
    ReplayBuffer buf(1000);
    for (int i = 0; i < 3; ++i) buf.add_episode(sine_episode(25, 0.3 * i, 540 + i));
    ObsStats st = buf.obs_stats();
    RngStream sample(mix_seed(607, "sample"));
    SequenceBatch batch = make_sequence_batch(buf, sample, 6, 2, st);
    RngStream noise(mix_seed(607, "noise"));
    auto eps = draw_eps(m.spec().rssm, 6, 2, noise);

    nets::Adam opt(1e-3);
    for (int it = 0; it < 5; ++it) {
      Tape t;
      ParamBinding bind(t, store);
      WmLoss l = m.sequence_loss(t, bind, batch, eps, lambda);
      opt.step(store, bind.grad_flat(l.total));
    }
    return store.values();
  };
  auto plain = run(0.0);
  auto again = run(0.0);
  CHECK(plain == again);
  auto reg = run(0.5);
  CHECK(plain != reg);
}

TEST_CASE("wm: overfits a tiny fixed batch") {
  ParamStore store;
  RngStream rng(mix_seed(608, "init"));
  WorldModel m = WorldModel::create(store, rng, "wm", tiny_wm());
  ReplayBuffer buf(1000);
  for (int i = 0; i < 3; ++i) buf.add_episode(sine_episode(25, 0.9 * i, 550 + i));
  ObsStats st = buf.obs_stats();
  RngStream sample(mix_seed(608, "sample"));
  SequenceBatch batch = make_sequence_batch(buf, sample, 6, 4, st);
  auto eps = zero_eps(m.spec().rssm, 6, 4);

  nets::Adam opt(3e-3);
  double first = 0, last = 0;
  for (int it = 0; it < 500; ++it) {
    Tape t;
    ParamBinding bind(t, store);
    WmLoss l = m.sequence_loss(t, bind, batch, eps, 0.1);
    if (it == 0) first = t.scalar(l.total);
    last = t.scalar(l.total);
    opt.step(store, bind.grad_flat(l.total));
  }
  INFO("loss ", first, " -> ", last);
  CHECK(last < first);
  // Free bits put a hard floor under the divergence term.
  CHECK(last >= m.spec().rssm.free_bits * m.spec().rssm.kl_beta);
}

TEST_CASE("wm: projected state cloud shrinks its volume proxy when collapsed") {
  // Direct use of the volume metric on projected states of a filtered rollout.
  ParamStore store;
  RngStream rng(mix_seed(609, "init"));
  WorldModel m = WorldModel::create(store, rng, "wm", tiny_wm());
  RngStream noise(mix_seed(609, "h"));
  std::vector<Mat> hs;
  for (int t = 0; t < 20; ++t) {
    Mat h(4, 3);
    for (int i = 0; i < h.size(); ++i) h.data()[i] = noise.normal();
    hs.push_back(h);
  }
  Mat cloud = m.projected_states(store, hs);
  CHECK(cloud.rows() == 4);
  CHECK(cloud.cols() == 60);
  auto vol = latent::log_phase_volume(cloud.transpose(), 4);
  auto vol_small = latent::log_phase_volume((0.5 * cloud).transpose(), 4);
  CHECK(vol_small.sum_log < vol.sum_log);
}
