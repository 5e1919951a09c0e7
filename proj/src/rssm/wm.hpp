#pragma once
#include "latent/latent.hpp"
#include "phcore/phcore.hpp"
#include "rssm/replay.hpp"
#include "rssm/rssm.hpp"

namespace phwm::rssm {

struct WorldModelSpec {
  RssmSpec rssm;
  phcore::PhSpec ph;   // ph.n is the projected phase-space dimension
  double dt = 0.05;    // control interval of the underlying data
  int ph_steps = 1;    // integrated prediction horizon of the physics branch
};

// Loss terms of one sequence batch. total is the optimized scalar; the parts
// are kept for logging. All are 1x1 vars on the same tape.
struct WmLoss {
  Var recon, divergence, reward, ph, total;
  double lambda_ph = 0.0;
};

// Recurrent model plus the structured-dynamics regularizer: the physical rows
// of h are projected into a phase space where a learned port-interconnected
// field must explain the step-to-step motion. The projection input is detached,
// so the regularizer trains only the projection and field parameters.
class WorldModel {
public:
  WorldModel() = default;
  static WorldModel create(ParamStore& store, RngStream& rng, const std::string& prefix,
                           const WorldModelSpec& spec);

  const WorldModelSpec& spec() const { return spec_; }
  const Rssm& rssm() const { return rssm_; }
  const latent::Projection& projection() const { return proj_; }
  const phcore::PhCore& core() const { return core_; }

  struct Unroll {
    std::vector<Var> h, z;
    std::vector<Gauss> post, prior;
  };
  // Filters the batch through the recurrence; eps holds one z_dim x B noise
  // matrix per time step.
  Unroll observe(Tape& t, ParamBinding& bind, const SequenceBatch& batch,
                 const std::vector<Mat>& eps) const;

  // Full training objective at a given regularizer weight. With lambda_ph == 0
  // the physics branch is not built at all, so the objective (and the gradient
  // and parameter trajectory) is exactly the plain model's.
  WmLoss sequence_loss(Tape& t, ParamBinding& bind, const SequenceBatch& batch,
                       const std::vector<Mat>& eps, double lambda_ph) const;

  // Projected physical states for a filtered rollout, one column per (t, b)
  // pair; used by the phase-volume diagnostics.
  Mat projected_states(const ParamStore& store, const std::vector<Mat>& h_phys) const;

  struct FilteredPlain {
    std::vector<Mat> h, z;  // one entry per step, columns are batch elements
  };
  // Posterior filtering in plain arithmetic; noise comes from the given stream
  // (z_dim * B normal draws per step, column-major).
  FilteredPlain filter_plain(const ParamStore& store, const SequenceBatch& batch,
                             RngStream& noise) const;

private:
  Var ph_branch(Tape& t, ParamBinding& bind, const Unroll& un, const SequenceBatch& batch) const;

  WorldModelSpec spec_;
  Rssm rssm_;
  latent::Projection proj_;
  phcore::PhCore core_;
};

}  // namespace phwm::rssm
