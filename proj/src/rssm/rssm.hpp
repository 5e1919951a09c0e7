#pragma once
#include "nets/net.hpp"

namespace phwm::rssm {

using ad::Mat;
using ad::Tape;
using ad::Var;
using nets::ParamBinding;
using nets::ParamStore;

struct RssmSpec {
  int d_obs = 2;
  int d_a = 1;
  int h_dim = 64;    // deterministic state
  int h_phys = 16;   // leading rows of h reserved for the physical read-out
  int z_dim = 16;    // stochastic latent
  int obs_embed = 32;
  std::vector<int> head_hidden{64};  // posterior/prior/decoder/reward heads
  double kl_beta = 1.0;
  double kl_balance = 0.8;  // weight on the prior-training side of the divergence
  double free_bits = 1.0;   // floor on the averaged divergence, in nats
};

// Diagonal Gaussian over the stochastic latent; both matrices are z_dim x B.
// log_std comes pre-clamped to [-5, 2] by the heads that produce it.
struct Gauss {
  Var mean, log_std;
};

// Deterministic recurrence h_t = GRU(h_{t-1}, [z_{t-1}; a_{t-1}]) with Gaussian
// posterior q(z|h,o) and prior p(z|h), an observation decoder and a reward head.
// Columns are independent batch elements throughout.
class Rssm {
public:
  Rssm() = default;
  static Rssm create(ParamStore& store, RngStream& rng, const std::string& prefix,
                     const RssmSpec& spec);

  const RssmSpec& spec() const { return spec_; }

  Var initial_h(Tape& t, int batch) const;  // zeros
  Var recurrent_step(Tape& t, ParamBinding& bind, Var h, Var z, Var a) const;

  Gauss posterior(Tape& t, ParamBinding& bind, Var h, Var o) const;
  Gauss prior(Tape& t, ParamBinding& bind, Var h) const;

  // Reparameterized draw mean + exp(log_std) .* eps; eps is caller-provided so
  // that all randomness stays in the named-stream registry.
  Var sample(Tape& t, const Gauss& dist, Var eps) const;

  Var decode(Tape& t, ParamBinding& bind, Var h, Var z) const;
  Var reward(Tape& t, ParamBinding& bind, Var h, Var z) const;

  // Elementwise divergence KL(a || b) summed over latent dimensions, 1 x B.
  Var kl(Tape& t, const Gauss& a, const Gauss& b) const;
  // Two-sided stop-gradient mix: balance * KL(sg(post) || prior)
  //                            + (1 - balance) * KL(post || sg(prior)).
  Var balanced_kl(Tape& t, const Gauss& post, const Gauss& prior) const;

  Var physical_part(Tape& t, Var h) const { return t.rows(h, 0, spec_.h_phys); }

  // Plain-arithmetic twins for imagination and evaluation, bit-identical to the
  // taped forward passes.
  Mat recurrent_plain(const ParamStore& store, const Mat& h, const Mat& z, const Mat& a) const;
  std::pair<Mat, Mat> posterior_plain(const ParamStore& store, const Mat& h, const Mat& o) const;
  std::pair<Mat, Mat> prior_plain(const ParamStore& store, const Mat& h) const;
  Mat decode_plain(const ParamStore& store, const Mat& h, const Mat& z) const;
  Mat reward_plain(const ParamStore& store, const Mat& h, const Mat& z) const;

private:
  Gauss split_head(Tape& t, Var raw) const;

  RssmSpec spec_;
  nets::GruCell cell_;
  nets::Mlp obs_enc_, post_head_, prior_head_, decoder_, reward_head_;
};

}  // namespace phwm::rssm
