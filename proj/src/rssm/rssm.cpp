#include "rssm/rssm.hpp"

#include "core/error.hpp"

namespace phwm::rssm {

namespace {
constexpr double kLogStdLo = -5.0;
constexpr double kLogStdHi = 2.0;
}  // namespace

Rssm Rssm::create(ParamStore& store, RngStream& rng, const std::string& prefix,
                  const RssmSpec& spec) {
  require(spec.d_obs > 0 && spec.d_a > 0 && spec.z_dim > 0, ErrorKind::Dimension,
          "rssm '" + prefix + "': bad spec");
  require(spec.h_phys > 0 && spec.h_phys <= spec.h_dim, ErrorKind::Dimension,
          "rssm '" + prefix + "': physical split must fit inside h");
  Rssm m;
  m.spec_ = spec;
  m.cell_ = nets::GruCell::create(store, rng, prefix + ".gru", spec.z_dim + spec.d_a, spec.h_dim);

  nets::MlpSpec enc;
  enc.in = spec.d_obs;
  enc.hidden = {spec.obs_embed};
  enc.out = spec.obs_embed;
  m.obs_enc_ = nets::Mlp::create(store, rng, prefix + ".enc", enc);

  nets::MlpSpec post;
  post.in = spec.h_dim + spec.obs_embed;
  post.hidden = spec.head_hidden;
  post.out = 2 * spec.z_dim;
  m.post_head_ = nets::Mlp::create(store, rng, prefix + ".post", post);

  nets::MlpSpec prior = post;
  prior.in = spec.h_dim;
  m.prior_head_ = nets::Mlp::create(store, rng, prefix + ".prior", prior);

  nets::MlpSpec dec;
  dec.in = spec.h_dim + spec.z_dim;
  dec.hidden = spec.head_hidden;
  dec.out = spec.d_obs;
  m.decoder_ = nets::Mlp::create(store, rng, prefix + ".dec", dec);

  nets::MlpSpec rew = dec;
  rew.out = 1;
  m.reward_head_ = nets::Mlp::create(store, rng, prefix + ".rew", rew);
  return m;
}

Var Rssm::initial_h(Tape& t, int batch) const {
  return t.constant(Mat::Zero(spec_.h_dim, batch));
}

Var Rssm::recurrent_step(Tape& t, ParamBinding& bind, Var h, Var z, Var a) const {
  return cell_.forward(t, bind, t.concat_rows(z, a), h);
}

Gauss Rssm::split_head(Tape& t, Var raw) const {
  Gauss g;
  g.mean = t.rows(raw, 0, spec_.z_dim);
  g.log_std = t.clamp(t.rows(raw, spec_.z_dim, spec_.z_dim), kLogStdLo, kLogStdHi);
  return g;
}

Gauss Rssm::posterior(Tape& t, ParamBinding& bind, Var h, Var o) const {
  Var e = obs_enc_.forward(t, bind, o);
  return split_head(t, post_head_.forward(t, bind, t.concat_rows(h, e)));
}

Gauss Rssm::prior(Tape& t, ParamBinding& bind, Var h) const {
  return split_head(t, prior_head_.forward(t, bind, h));
}

Var Rssm::sample(Tape& t, const Gauss& dist, Var eps) const {
  return t.add(dist.mean, t.hadamard(t.exp(dist.log_std), eps));
}

Var Rssm::decode(Tape& t, ParamBinding& bind, Var h, Var z) const {
  return decoder_.forward(t, bind, t.concat_rows(h, z));
}

Var Rssm::reward(Tape& t, ParamBinding& bind, Var h, Var z) const {
  return reward_head_.forward(t, bind, t.concat_rows(h, z));
}

Var Rssm::kl(Tape& t, const Gauss& a, const Gauss& b) const {
  // Per dimension: (lb - la) + 0.5 exp(2(la - lb)) + 0.5 (ma - mb)^2 exp(-2 lb) - 0.5.
  Var dl = t.sub(b.log_std, a.log_std);
  Var ratio = t.scale(t.exp(t.scale(dl, -2.0)), 0.5);
  Var gap = t.scale(t.hadamard(t.square(t.sub(a.mean, b.mean)), t.exp(t.scale(b.log_std, -2.0))),
                    0.5);
  Var half = t.constant(Mat::Constant(spec_.z_dim, t.val(dl).cols(), 0.5));
  return t.col_sums(t.sub(t.add(t.add(dl, ratio), gap), half));
}

namespace {

std::pair<Mat, Mat> split_plain(const Mat& raw, int z_dim) {
  Mat mean = raw.topRows(z_dim);
  Mat ls = raw.bottomRows(z_dim).cwiseMax(kLogStdLo).cwiseMin(kLogStdHi);
  return {mean, ls};
}

Mat stack_rows(const Mat& a, const Mat& b) {
  Mat out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

Mat Rssm::recurrent_plain(const ParamStore& store, const Mat& h, const Mat& z,
                          const Mat& a) const {
  return cell_.forward_plain(store, stack_rows(z, a), h);
}

std::pair<Mat, Mat> Rssm::posterior_plain(const ParamStore& store, const Mat& h,
                                          const Mat& o) const {
  Mat e = obs_enc_.forward_plain(store, o);
  return split_plain(post_head_.forward_plain(store, stack_rows(h, e)), spec_.z_dim);
}

std::pair<Mat, Mat> Rssm::prior_plain(const ParamStore& store, const Mat& h) const {
  return split_plain(prior_head_.forward_plain(store, h), spec_.z_dim);
}

Mat Rssm::decode_plain(const ParamStore& store, const Mat& h, const Mat& z) const {
  return decoder_.forward_plain(store, stack_rows(h, z));
}

Mat Rssm::reward_plain(const ParamStore& store, const Mat& h, const Mat& z) const {
  return reward_head_.forward_plain(store, stack_rows(h, z));
}

Var Rssm::balanced_kl(Tape& t, const Gauss& post, const Gauss& prior) const {
  Gauss post_sg{t.stop_gradient(post.mean), t.stop_gradient(post.log_std)};
  Gauss prior_sg{t.stop_gradient(prior.mean), t.stop_gradient(prior.log_std)};
  Var train_prior = kl(t, post_sg, prior);
  Var train_post = kl(t, post, prior_sg);
  return t.add(t.scale(train_prior, spec_.kl_balance),
               t.scale(train_post, 1.0 - spec_.kl_balance));
}

}  // namespace phwm::rssm
