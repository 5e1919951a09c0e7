#include "rssm/replay.hpp"

#include "core/error.hpp"

namespace phwm::rssm {

VectorXd ObsStats::normalize(const VectorXd& q, const VectorXd& qdot) const {
  require(q.size() + qdot.size() == mean.size(), ErrorKind::Dimension,
          "obs stats: dimension mismatch");
  VectorXd o(mean.size());
  o << q, qdot;
  return (o - mean).cwiseQuotient(std);
}

void ReplayBuffer::add_episode(std::vector<env::StepRecord> ep) {
  require(!ep.empty(), ErrorKind::InsufficientData, "replay: empty episode");
  total_steps_ += ep.size();
  episodes_.push_back(std::move(ep));
  while (episodes_.size() > 1 && total_steps_ > capacity_) {
    total_steps_ -= episodes_.front().size();
    episodes_.pop_front();
  }
}

const std::vector<env::StepRecord>& ReplayBuffer::episode(size_t i) const {
  require(i < episodes_.size(), ErrorKind::Dimension, "replay: episode index out of range");
  return episodes_[i];
}

std::vector<env::StepRecord> ReplayBuffer::sample_sequence(RngStream& rng, int seq_len) const {
  require(seq_len >= 2, ErrorKind::Config, "replay: sequence length must be >= 2");
  size_t starts = 0;
  for (const auto& ep : episodes_)
    if (ep.size() >= static_cast<size_t>(seq_len)) starts += ep.size() - seq_len + 1;
  require(starts > 0, ErrorKind::InsufficientData, "replay: no episode long enough to sample");

  size_t pick = static_cast<size_t>(rng.uniform_int(static_cast<int>(starts)));
  for (const auto& ep : episodes_) {
    if (ep.size() < static_cast<size_t>(seq_len)) continue;
    size_t here = ep.size() - seq_len + 1;
    if (pick < here) {
      auto first = ep.begin() + static_cast<long>(pick);
      return {first, first + seq_len};
    }
    pick -= here;
  }
  raise(ErrorKind::Numerical, "replay: sampling walk exhausted");  // unreachable
}

WindowSample ReplayBuffer::sample_window(RngStream& rng, int k) const {
  require(k >= 1, ErrorKind::Config, "replay: history length must be >= 1");
  // Need k records before t and one after, so t ranges over [k, len - 2].
  size_t starts = 0;
  for (const auto& ep : episodes_)
    if (ep.size() >= static_cast<size_t>(k + 2)) starts += ep.size() - k - 1;
  require(starts > 0, ErrorKind::InsufficientData, "replay: no episode long enough to sample");

  size_t pick = static_cast<size_t>(rng.uniform_int(static_cast<int>(starts)));
  for (const auto& ep : episodes_) {
    if (ep.size() < static_cast<size_t>(k + 2)) continue;
    size_t here = ep.size() - k - 1;
    if (pick >= here) {
      pick -= here;
      continue;
    }
    size_t t = pick + k;
    const auto d_q = ep[0].q.size();
    WindowSample s;
    s.window.resize((k + 1) * d_q);
    for (int i = 0; i <= k; ++i) s.window.segment(i * d_q, d_q) = ep[t - k + i].q;
    s.now = ep[t];
    s.next = ep[t + 1];
    return s;
  }
  raise(ErrorKind::Numerical, "replay: sampling walk exhausted");  // unreachable
}

ObsStats ReplayBuffer::obs_stats() const {
  require(total_steps_ >= 2, ErrorKind::InsufficientData, "replay: too few steps for statistics");
  const auto& first = episodes_.front().front();
  const auto d = first.q.size() + first.qdot.size();
  VectorXd sum = VectorXd::Zero(d), sq = VectorXd::Zero(d);
  for (const auto& ep : episodes_) {
    for (const auto& r : ep) {
      VectorXd o(d);
      o << r.q, r.qdot;
      sum += o;
      sq += o.cwiseProduct(o);
    }
  }
  const double n = static_cast<double>(total_steps_);
  ObsStats st;
  st.mean = sum / n;
  st.std = (sq / n - st.mean.cwiseProduct(st.mean)).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-6);
  return st;
}

SequenceBatch make_sequence_batch(const ReplayBuffer& buf, RngStream& rng, int seq_len,
                                  int batch, const ObsStats& stats) {
  require(batch >= 1, ErrorKind::Config, "replay: batch must be positive");
  SequenceBatch out;
  std::vector<std::vector<env::StepRecord>> seqs;
  seqs.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) seqs.push_back(buf.sample_sequence(rng, seq_len));

  const auto d_obs = stats.mean.size();
  const auto d_a = seqs[0][0].a.size();
  for (int t = 0; t < seq_len; ++t) {
    Mat o(d_obs, batch), a(d_a, batch), r(1, batch);
    for (int b = 0; b < batch; ++b) {
      const auto& rec = seqs[static_cast<size_t>(b)][static_cast<size_t>(t)];
      o.col(b) = stats.normalize(rec.q, rec.qdot);
      a.col(b) = rec.a;
      r(0, b) = rec.r;
    }
    out.obs.push_back(std::move(o));
    out.act.push_back(std::move(a));
    out.rew.push_back(std::move(r));
  }
  return out;
}

}  // namespace phwm::rssm
