#include "ac/ac.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace phwm::ac {

namespace {
constexpr double kLogStdLo = -5.0;
constexpr double kLogStdHi = 2.0;
const double kLog2Pi = std::log(2.0 * M_PI);
}  // namespace

double percentile(std::vector<double> xs, double p) {
  require(!xs.empty(), ErrorKind::InsufficientData, "percentile of an empty sample");
  require(p >= 0.0 && p <= 1.0, ErrorKind::Config, "percentile level outside [0, 1]");
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<size_t>(pos);
  if (lo + 1 >= xs.size()) return xs.back();
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[lo + 1] * frac;
}

Mat lambda_returns(const Mat& r, const Mat& values, const Mat& cont, double gamma,
                   double lambda) {
  const auto H = r.rows();
  require(H >= 2, ErrorKind::Dimension, "returns: horizon must be at least 2");
  require(values.rows() == H + 1 && cont.rows() == H, ErrorKind::Dimension,
          "returns: values need a bootstrap row and cont must match the horizon");
  require(values.cols() == r.cols() && cont.cols() == r.cols(), ErrorKind::Dimension,
          "returns: batch widths disagree");

  Mat out(H + 1, r.cols());
  out.row(H) = values.row(H);
  for (Eigen::Index t = H - 1; t >= 0; --t) {
    Mat mix = (1.0 - lambda) * values.row(t + 1) + lambda * out.row(t + 1);
    out.row(t) = r.row(t) + gamma * cont.row(t).cwiseProduct(mix);
  }
  return out;
}

Mat discount_weights(const Mat& cont, int horizon) {
  require(horizon >= 2, ErrorKind::Config, "weights: horizon must be at least 2");
  const double gamma = 1.0 - 1.0 / static_cast<double>(horizon);
  Mat w(cont.rows(), cont.cols());
  for (Eigen::Index t = 0; t < cont.rows(); ++t) {
    Mat step = gamma * cont.row(t);
    w.row(t) = t == 0 ? step : Mat(w.row(t - 1).cwiseProduct(step));
  }
  return w;
}

void ReturnScaler::update(const Mat& returns) {
  std::vector<double> flat(returns.data(), returns.data() + returns.size());
  const double lo = percentile(flat, 0.05);
  const double hi = percentile(flat, 0.95);
  if (!primed) {
    q05 = lo;
    q95 = hi;
    primed = true;
    return;
  }
  q05 = decay * q05 + (1.0 - decay) * lo;
  q95 = decay * q95 + (1.0 - decay) * hi;
}

void DualState::update(double c_energy, double c_smooth) {
  lambda_e = std::max(0.0, lambda_e + eta_lambda * (c_energy - eps_e));
  lambda_s = std::max(0.0, lambda_s + eta_lambda * (c_smooth - eps_s));
}

ActorCritic ActorCritic::create(ParamStore& store, RngStream& rng, const std::string& prefix,
                                const AcSpec& spec) {
  require(spec.feat_dim > 0 && spec.d_a > 0, ErrorKind::Dimension,
          "actor-critic '" + prefix + "': bad spec");
  require(spec.horizon >= 2, ErrorKind::Config,
          "actor-critic '" + prefix + "': horizon must be at least 2");
  ActorCritic m;
  m.spec_ = spec;
  nets::MlpSpec pi;
  pi.in = spec.feat_dim;
  pi.hidden = spec.actor_hidden;
  pi.out = 2 * spec.d_a;
  m.actor_ = nets::Mlp::create(store, rng, prefix + ".pi", pi);
  nets::MlpSpec v;
  v.in = spec.feat_dim;
  v.hidden = spec.critic_hidden;
  v.out = 1;
  m.critic_ = nets::Mlp::create(store, rng, prefix + ".v", v);
  return m;
}

PolicyDist ActorCritic::actor(Tape& t, ParamBinding& bind, Var feat) const {
  Var raw = actor_.forward(t, bind, feat);
  PolicyDist d;
  d.mean = t.rows(raw, 0, spec_.d_a);
  d.log_std = t.clamp(t.rows(raw, spec_.d_a, spec_.d_a), kLogStdLo, kLogStdHi);
  return d;
}

Var ActorCritic::critic(Tape& t, ParamBinding& bind, Var feat) const {
  return critic_.forward(t, bind, feat);
}

Mat ActorCritic::actor_plain(const ParamStore& store, const Mat& feat) const {
  Mat raw = actor_.forward_plain(store, feat);
  raw.bottomRows(spec_.d_a) =
      raw.bottomRows(spec_.d_a).cwiseMax(kLogStdLo).cwiseMin(kLogStdHi);
  return raw;
}

Mat ActorCritic::critic_plain(const ParamStore& store, const Mat& feat) const {
  return critic_.forward_plain(store, feat);
}

Var ActorCritic::log_prob(Tape& t, const PolicyDist& d, Var u) const {
  const auto B = t.val(u).cols();
  Var zn = t.hadamard(t.sub(u, d.mean), t.exp(t.neg(d.log_std)));
  Var half = t.constant(Mat::Constant(spec_.d_a, B, 0.5 * kLog2Pi));
  Var log_n = t.neg(t.add(t.add(t.scale(t.square(zn), 0.5), d.log_std), half));
  // log(1 - tanh(u)^2) written without cancellation: 2 (log 2 - u - softplus(-2u)).
  Var log2c = t.constant(Mat::Constant(spec_.d_a, B, std::log(2.0)));
  Var corr = t.scale(t.sub(t.sub(log2c, u), t.softplus(t.scale(u, -2.0))), 2.0);
  return t.col_sums(t.sub(log_n, corr));
}

Var ActorCritic::entropy(Tape& t, const PolicyDist& d) const {
  const auto B = t.val(d.log_std).cols();
  Var base = t.constant(Mat::Constant(spec_.d_a, B, 0.5 * (kLog2Pi + 1.0)));
  return t.col_sums(t.add(d.log_std, base));
}

Mat ActorCritic::sample_pre_squash(const Mat& stacked, RngStream& rng) const {
  const auto B = stacked.cols();
  Mat u(spec_.d_a, B);
  for (Eigen::Index c = 0; c < B; ++c)
    for (int i = 0; i < spec_.d_a; ++i)
      u(i, c) = stacked(i, c) + std::exp(stacked(spec_.d_a + i, c)) * rng.normal();
  return u;
}

ImaginedRollout imagine(const rssm::WorldModel& wm, const ParamStore& wm_store,
                        const ActorCritic& acnet, const ParamStore& ac_store, const Mat& h0,
                        const Mat& z0, int horizon, RngStream& noise) {
  require(horizon >= 2, ErrorKind::Config, "imagine: horizon must be at least 2");
  const auto B = h0.cols();
  const int zd = wm.spec().rssm.z_dim;
  const int da = acnet.spec().d_a;
  require(z0.cols() == B && z0.rows() == zd, ErrorKind::Dimension,
          "imagine: start state shapes disagree");

  ImaginedRollout out;
  out.rewards.resize(horizon, B);
  out.values.resize(horizon + 1, B);
  out.cont = Mat::Ones(horizon, B);

  Mat h = h0, z = z0;
  auto stack = [](const Mat& a, const Mat& b) {
    Mat s(a.rows() + b.rows(), a.cols());
    s << a, b;
    return s;
  };
  for (int t = 0; t <= horizon; ++t) {
    Mat feat = stack(h, z);
    out.feat.push_back(feat);
    out.values.row(t) = acnet.critic_plain(ac_store, feat).row(0);
    if (t == horizon) break;
    out.rewards.row(t) = wm.rssm().reward_plain(wm_store, h, z).row(0);
    Mat u = acnet.sample_pre_squash(acnet.actor_plain(ac_store, feat), noise);
    out.u.push_back(u);
    Mat a = u.array().tanh().matrix();
    h = wm.rssm().recurrent_plain(wm_store, h, z, a);
    auto [pm, pl] = wm.rssm().prior_plain(wm_store, h);
    Mat eps(zd, B);
    for (int i = 0; i < eps.size(); ++i) eps.data()[i] = noise.normal();
    z = pm + pl.array().exp().matrix().cwiseProduct(eps);
    (void)da;
  }
  require(out.values.allFinite() && out.rewards.allFinite(), ErrorKind::Numerical,
          "imagine: rollout diverged");
  return out;
}

ActorLossParts actor_loss(Tape& t, const ActorCritic& net, ParamBinding& bind, const Mat& feat,
                          const Mat& u, const Mat& adv, const Mat& w, double entropy_eta) {
  PolicyDist d = net.actor(t, bind, t.constant(feat));
  Var lp = net.log_prob(t, d, t.constant(u));
  Var ent = net.entropy(t, d);
  Var term = t.sub(t.neg(t.hadamard(lp, t.constant(adv))), t.scale(ent, entropy_eta));
  ActorLossParts parts;
  parts.loss = t.scale(t.sum(t.hadamard(t.constant(w), term)), 1.0 / static_cast<double>(u.cols()));
  parts.entropy_mean = t.scale(t.sum(ent), 1.0 / static_cast<double>(u.cols()));
  return parts;
}

Var critic_loss(Tape& t, const ActorCritic& net, ParamBinding& bind, const Mat& feat,
                const Mat& r_target, const Mat& v_slow, const Mat& w) {
  Var v = net.critic(t, bind, t.constant(feat));
  Var half_r = t.scale(t.square(t.sub(v, t.constant(r_target))), 0.5);
  Var half_s = t.scale(t.square(t.sub(v, t.constant(v_slow))), 0.5);
  Var consts = t.constant(Mat::Constant(1, feat.cols(), kLog2Pi));  // two NLL floors
  Var nll = t.add(t.add(half_r, half_s), consts);
  return t.scale(t.sum(t.hadamard(t.constant(w), nll)), 1.0 / static_cast<double>(feat.cols()));
}

ConstraintTerms constraint_terms(Tape& t, const ActorCritic& acnet, ParamBinding& ac_bind,
                                 const energy::EnergyModel& em, ParamBinding& em_bind,
                                 const ConstraintBatch& batch, const Mat& eps) {
  const auto B = batch.feat.cols();
  require(batch.window.cols() == B && eps.cols() == B, ErrorKind::Dimension,
          "constraints: batch widths disagree");
  PolicyDist d = acnet.actor(t, ac_bind, t.constant(batch.feat));
  Var u = t.add(d.mean, t.hadamard(t.exp(d.log_std), t.constant(eps)));
  Var a = t.tanh(u);

  Var h_next = em.predict_next_energy(t, em_bind, t.constant(batch.window), a, batch.dt);
  Var h_raw = t.scale(h_next, em.calibration().scale);
  Var g = t.grad_one(t.sum(h_raw), a);  // per-column action gradient

  Var slope = t.col_sums(t.hadamard(g, a));
  ConstraintTerms out;
  out.c_energy = t.scale(t.sum(t.square(slope)), 1.0 / static_cast<double>(B));
  // Exact per-column H a: d(g . a)/da = H a + g because columns never mix.
  Var ha = t.sub(t.grad_one(t.sum(t.hadamard(g, a)), a), g);
  Var quad = t.col_sums(t.hadamard(a, ha));
  out.c_smooth = t.scale(t.sum(quad), 1.0 / static_cast<double>(B));
  out.actions = a;
  return out;
}

AcLearner::AcLearner(ActorCritic net, const ParamStore& store)
    : net_(std::move(net)), opt_(net_.spec().lr), slow_(store) {
  scaler_.decay = net_.spec().scaler_decay;
}

AcUpdateStats AcLearner::update(ParamStore& ac_store, const rssm::WorldModel& wm,
                                const ParamStore& wm_store, const Mat& h0, const Mat& z0,
                                const energy::EnergyModel* em, const ParamStore* em_store,
                                const ConstraintBatch* cbatch, RngStream& noise) {
  const AcSpec& spec = net_.spec();
  const int H = spec.horizon;
  const auto B = h0.cols();
  ImaginedRollout roll = imagine(wm, wm_store, net_, ac_store, h0, z0, H, noise);

  const double gamma = 1.0 - 1.0 / static_cast<double>(H);
  Mat returns = lambda_returns(roll.rewards, roll.values, roll.cont, gamma, spec.lambda_ret);
  scaler_.update(returns.topRows(H));
  Mat adv = (returns.topRows(H) - roll.values.topRows(H)) / scaler_.span();
  Mat w = discount_weights(roll.cont, H);

  // Flatten the horizon into one column batch: block t occupies columns
  // [t*B, (t+1)*B).
  const auto N = static_cast<Eigen::Index>(H) * B;
  Mat feat(roll.feat[0].rows(), N), u(roll.u[0].rows(), N);
  Mat adv_row(1, N), w_row(1, N), r_row(1, N), vs_row(1, N);
  for (int t = 0; t < H; ++t) {
    const auto at = static_cast<Eigen::Index>(t) * B;
    feat.middleCols(at, B) = roll.feat[static_cast<size_t>(t)];
    u.middleCols(at, B) = roll.u[static_cast<size_t>(t)];
    adv_row.middleCols(at, B) = adv.row(t);
    w_row.middleCols(at, B) = w.row(t);
    r_row.middleCols(at, B) = returns.row(t);
    vs_row.middleCols(at, B) = net_.critic_plain(slow_, roll.feat[static_cast<size_t>(t)]).row(0);
  }

  Tape t;
  ParamBinding bind(t, ac_store);
  ActorLossParts ap = actor_loss(t, net_, bind, feat, u, adv_row, w_row, spec.entropy_eta);
  Var lc = critic_loss(t, net_, bind, feat, r_row, vs_row, w_row);
  Var total = t.add(t.scale(ap.loss, spec.alpha_p), t.scale(lc, spec.alpha_v));

  AcUpdateStats stats;
  const bool constrained = em != nullptr && em_store != nullptr && cbatch != nullptr &&
                           dual_.active();
  if (constrained) {
    ParamBinding em_bind(t, *em_store, false);
    Mat eps(net_.spec().d_a, cbatch->feat.cols());
    for (int i = 0; i < eps.size(); ++i) eps.data()[i] = noise.normal();
    ConstraintTerms ct = constraint_terms(t, net_, bind, *em, em_bind, *cbatch, eps);
    stats.c_energy = t.scalar(ct.c_energy);
    stats.c_smooth = t.scalar(ct.c_smooth);
    Var margin = t.add(t.scale(t.sub(ct.c_energy, t.constant(dual_.eps_e)), dual_.lambda_e),
                       t.scale(t.sub(ct.c_smooth, t.constant(dual_.eps_s)), dual_.lambda_s));
    total = t.add(total, margin);
  }

  require(std::isfinite(t.scalar(total)), ErrorKind::Numerical,
          "actor-critic: non-finite objective");
  opt_.step(ac_store, bind.grad_flat(total));

  // Slow critic tracks the fast parameters after every primal step.
  auto& sv = slow_.values();
  const auto& fv = ac_store.values();
  for (size_t i = 0; i < sv.size(); ++i)
    sv[i] = spec.slow_decay * sv[i] + (1.0 - spec.slow_decay) * fv[i];

  if (constrained) dual_.update(stats.c_energy, stats.c_smooth);

  stats.l_actor = t.scalar(ap.loss);
  stats.l_critic = t.scalar(lc);
  stats.lambda_e = dual_.lambda_e;
  stats.lambda_s = dual_.lambda_s;
  stats.return_mean = returns.row(0).mean();
  stats.entropy = t.scalar(ap.entropy_mean);
  return stats;
}

std::pair<std::vector<double>, std::vector<double>> AcLearner::constraint_samples(
    const ParamStore& ac_store, const energy::EnergyModel& em, const ParamStore& em_store,
    const ConstraintBatch& batch, RngStream& noise) const {
  Tape t;
  ParamBinding ac_bind(t, ac_store, false);
  ParamBinding em_bind(t, em_store, false);
  Mat eps(net_.spec().d_a, batch.feat.cols());
  for (int i = 0; i < eps.size(); ++i) eps.data()[i] = noise.normal();

  PolicyDist d = net_.actor(t, ac_bind, t.constant(batch.feat));
  Var u = t.add(d.mean, t.hadamard(t.exp(d.log_std), t.constant(eps)));
  Var a = t.tanh(u);
  Var h_raw = t.scale(em.predict_next_energy(t, em_bind, t.constant(batch.window), a, batch.dt),
                      em.calibration().scale);
  Var g = t.grad_one(t.sum(h_raw), a);
  Mat slope = t.val(t.col_sums(t.hadamard(g, a)));
  Var ha = t.sub(t.grad_one(t.sum(t.hadamard(g, a)), a), g);
  Mat quad = t.val(t.col_sums(t.hadamard(a, ha)));

  std::vector<double> ce(slope.size()), cs(quad.size());
  for (int i = 0; i < slope.size(); ++i) ce[static_cast<size_t>(i)] = slope(0, i) * slope(0, i);
  for (int i = 0; i < quad.size(); ++i) cs[static_cast<size_t>(i)] = quad(0, i);
  return {ce, cs};
}

}  // namespace phwm::ac
