#pragma once
#include <deque>
#include <vector>

#include "ad/tape.hpp"
#include "env/env.hpp"

namespace phwm::rssm {

using ad::Mat;
using Eigen::VectorXd;

// Per-dimension statistics of the observation vector [q; qdot], estimated once
// from the prefill data and frozen for the rest of training.
struct ObsStats {
  VectorXd mean, std;  // std floored away from zero

  VectorXd normalize(const VectorXd& q, const VectorXd& qdot) const;
};

// A batch of aligned fixed-length sequences, one matrix per time step with one
// column per sequence. Observations are already normalized.
struct SequenceBatch {
  std::vector<Mat> obs;  // d_obs x B each
  std::vector<Mat> act;  // d_a x B
  std::vector<Mat> rew;  // 1 x B
  int length() const { return static_cast<int>(obs.size()); }
};

// Window sample for the energy model: stacked coordinate history plus the two
// records bracketing the transition. Records are copied out, so later inserts
// and evictions cannot invalidate a sample.
struct WindowSample {
  VectorXd window;  // (k+1) * d_q, oldest position first
  env::StepRecord now, next;
};

// Episode store with a step-count budget. Whole episodes are evicted oldest
// first once the budget is exceeded; the newest episode is always kept even if
// it alone is over budget.
class ReplayBuffer {
public:
  explicit ReplayBuffer(size_t capacity_steps = 100000) : capacity_(capacity_steps) {}

  void add_episode(std::vector<env::StepRecord> ep);

  size_t steps() const { return total_steps_; }
  size_t episode_count() const { return episodes_.size(); }
  const std::vector<env::StepRecord>& episode(size_t i) const;

  // Contiguous in-episode slice of seq_len records, uniform over all valid
  // start positions in the buffer.
  std::vector<env::StepRecord> sample_sequence(RngStream& rng, int seq_len) const;

  // Transition with k prior positions of history; uniform over valid indices.
  WindowSample sample_window(RngStream& rng, int k) const;

  ObsStats obs_stats() const;

private:
  size_t capacity_ = 0;
  size_t total_steps_ = 0;
  std::deque<std::vector<env::StepRecord>> episodes_;
};

// Draws `batch` sequences and stacks them per time step for the world model.
SequenceBatch make_sequence_batch(const ReplayBuffer& buf, RngStream& rng, int seq_len,
                                  int batch, const ObsStats& stats);

}  // namespace phwm::rssm
