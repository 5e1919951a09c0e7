#include "rssm/wm.hpp"

#include <limits>
#include <sstream>

#include "core/error.hpp"

namespace phwm::rssm {

WorldModel WorldModel::create(ParamStore& store, RngStream& rng, const std::string& prefix,
                              const WorldModelSpec& spec) {
  require(spec.ph.d_a == spec.rssm.d_a, ErrorKind::Dimension,
          "world model '" + prefix + "': action dims of recurrence and field disagree");
  require(spec.ph_steps >= 1, ErrorKind::Config,
          "world model '" + prefix + "': prediction horizon must be >= 1");
  require(spec.dt > 0, ErrorKind::Config, "world model '" + prefix + "': dt must be positive");
  WorldModel m;
  m.spec_ = spec;
  m.rssm_ = Rssm::create(store, rng, prefix + ".rssm", spec.rssm);
  m.proj_ = latent::Projection::create(store, rng, prefix + ".proj", spec.rssm.h_phys, spec.ph.n);
  m.core_ = phcore::PhCore::create(store, rng, prefix + ".ph", spec.ph);
  return m;
}

WorldModel::Unroll WorldModel::observe(Tape& t, ParamBinding& bind, const SequenceBatch& batch,
                                       const std::vector<Mat>& eps) const {
  const int T = batch.length();
  require(T >= 1, ErrorKind::InsufficientData, "world model: empty sequence batch");
  require(eps.size() == static_cast<size_t>(T), ErrorKind::Dimension,
          "world model: one noise matrix per step required");

  Unroll un;
  const int B = static_cast<int>(batch.obs[0].cols());
  Var h = rssm_.initial_h(t, B);
  for (int step = 0; step < T; ++step) {
    if (step > 0) {
      Var a_prev = t.constant(batch.act[static_cast<size_t>(step - 1)]);
      h = rssm_.recurrent_step(t, bind, h, un.z.back(), a_prev);
    }
    Var o = t.constant(batch.obs[static_cast<size_t>(step)]);
    Gauss post = rssm_.posterior(t, bind, h, o);
    Gauss prior = rssm_.prior(t, bind, h);
    Var z = rssm_.sample(t, post, t.constant(eps[static_cast<size_t>(step)]));
    un.h.push_back(h);
    un.z.push_back(z);
    un.post.push_back(post);
    un.prior.push_back(prior);
  }
  return un;
}

Var WorldModel::ph_branch(Tape& t, ParamBinding& bind, const Unroll& un,
                          const SequenceBatch& batch) const {
  const int T = batch.length();
  const int m = spec_.ph_steps;
  require(T > m, ErrorKind::InsufficientData,
          "world model: sequence shorter than the physics horizon");
  const int B = static_cast<int>(batch.obs[0].cols());
  const int pairs = T - m;

  // One projection over all detached physical states, laid out as T blocks of
  // B columns. Time slice t lives in columns [t*B, (t+1)*B).
  Var h_cat = t.stop_gradient(rssm_.physical_part(t, un.h[0]));
  for (int step = 1; step < T; ++step)
    h_cat = t.concat_cols(h_cat, t.stop_gradient(rssm_.physical_part(t, un.h[static_cast<size_t>(step)])));
  Var x_all = proj_.project(t, bind, h_cat);

  Var x_pred = t.cols(x_all, 0, pairs * B);
  Var x_target = t.cols(x_all, m * B, pairs * B);

  // m integration steps, each under the actions recorded at that offset. All
  // pair columns advance together through a single batched field graph.
  for (int j = 0; j < m; ++j) {
    Mat a_j(batch.act[0].rows(), pairs * B);
    for (int step = 0; step < pairs; ++step)
      a_j.middleCols(static_cast<Eigen::Index>(step) * B, B) = batch.act[static_cast<size_t>(step + j)];
    Var a_const = t.constant(a_j);
    auto field = [&](Tape& tt, Var xs) { return core_.field(tt, bind, xs, a_const); };
    x_pred = phcore::rk4_step(t, field, x_pred, spec_.dt);
  }
  return phcore::shadow_loss(t, x_pred, x_target);
}

WmLoss WorldModel::sequence_loss(Tape& t, ParamBinding& bind, const SequenceBatch& batch,
                                 const std::vector<Mat>& eps, double lambda_ph) const {
  const int T = batch.length();
  require(T >= 2, ErrorKind::InsufficientData, "world model: need at least two steps");
  const int B = static_cast<int>(batch.obs[0].cols());
  Unroll un = observe(t, bind, batch, eps);

  Var recon_acc, reward_acc, kl_acc;
  for (int step = 0; step < T; ++step) {
    const auto s = static_cast<size_t>(step);
    Var o = t.constant(batch.obs[s]);
    Var r = t.constant(batch.rew[s]);
    Var de = t.col_sums(t.square(t.sub(rssm_.decode(t, bind, un.h[s], un.z[s]), o)));
    Var re = t.col_sums(t.square(t.sub(rssm_.reward(t, bind, un.h[s], un.z[s]), r)));
    Var ke = rssm_.balanced_kl(t, un.post[s], un.prior[s]);
    recon_acc = step == 0 ? de : t.add(recon_acc, de);
    reward_acc = step == 0 ? re : t.add(reward_acc, re);
    kl_acc = step == 0 ? ke : t.add(kl_acc, ke);
  }
  const double inv = 1.0 / (static_cast<double>(T) * B);

  WmLoss loss;
  loss.lambda_ph = lambda_ph;
  loss.recon = t.scale(t.sum(recon_acc), 0.5 * inv);
  loss.reward = t.scale(t.sum(reward_acc), 0.5 * inv);
  // Divergence floor: below free_bits the term saturates and passes no gradient.
  loss.divergence = t.clamp(t.scale(t.sum(kl_acc), inv), spec_.rssm.free_bits,
                            std::numeric_limits<double>::infinity());
  loss.ph = lambda_ph > 0.0 ? ph_branch(t, bind, un, batch) : t.constant(0.0);

  Var total = t.add(loss.recon, t.scale(loss.divergence, spec_.rssm.kl_beta));
  total = t.add(total, loss.reward);
  if (lambda_ph > 0.0) total = t.add(total, t.scale(loss.ph, lambda_ph));
  loss.total = total;

  if (!std::isfinite(t.scalar(loss.total))) {
    std::ostringstream os;
    os << "world model: non-finite loss (recon " << t.scalar(loss.recon) << ", divergence "
       << t.scalar(loss.divergence) << ", reward " << t.scalar(loss.reward) << ", ph "
       << t.scalar(loss.ph) << ")";
    raise(ErrorKind::Numerical, os.str());
  }
  return loss;
}

WorldModel::FilteredPlain WorldModel::filter_plain(const ParamStore& store,
                                                   const SequenceBatch& batch,
                                                   RngStream& noise) const {
  const int T = batch.length();
  require(T >= 1, ErrorKind::InsufficientData, "world model: empty sequence batch");
  const auto B = batch.obs[0].cols();
  const int zd = spec_.rssm.z_dim;
  FilteredPlain out;
  Mat h = Mat::Zero(spec_.rssm.h_dim, B);
  for (int step = 0; step < T; ++step) {
    const auto s = static_cast<size_t>(step);
    if (step > 0) h = rssm_.recurrent_plain(store, h, out.z.back(), batch.act[s - 1]);
    auto [mean, ls] = rssm_.posterior_plain(store, h, batch.obs[s]);
    Mat eps(zd, B);
    for (int i = 0; i < eps.size(); ++i) eps.data()[i] = noise.normal();
    out.h.push_back(h);
    out.z.push_back(mean + ls.array().exp().matrix().cwiseProduct(eps));
  }
  return out;
}

Mat WorldModel::projected_states(const ParamStore& store, const std::vector<Mat>& h_phys) const {
  require(!h_phys.empty(), ErrorKind::InsufficientData, "world model: no states to project");
  Eigen::Index cols = 0;
  for (const auto& m : h_phys) cols += m.cols();
  Mat cat(h_phys[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& m : h_phys) {
    cat.middleCols(at, m.cols()) = m;
    at += m.cols();
  }
  return proj_.project_plain(store, cat);
}

}  // namespace phwm::rssm
