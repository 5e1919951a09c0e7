#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "latent/latent.hpp"
#include "test_util.hpp"

using namespace phwm;
using namespace phwm::latent;
using ad::Mat;
using ad::Tape;
using ad::Var;
using Eigen::VectorXd;

TEST_CASE("latent: projection is an affine map and the taped path matches plain") {
  RngStream rng(mix_seed(200, "proj"));
  nets::ParamStore store;
  Projection proj = Projection::create(store, rng, "proj", 5, 3);
  store.view(store.id("proj.b")).setConstant(0.25);

  Mat h(5, 4);
  for (int i = 0; i < h.size(); ++i) h.data()[i] = rng.uniform(-1, 1);
  Mat plain = proj.project_plain(store, h);
  CHECK(plain.rows() == 3);
  CHECK(plain.cols() == 4);

  Tape t;
  nets::ParamBinding bind(t, store);
  Mat taped = t.val(proj.project(t, bind, t.constant(h)));
  CHECK((taped - plain).norm() == 0.0);

  // Affinity: f(a) - f(0) is linear.
  Mat z = Mat::Zero(5, 1);
  Mat f0 = proj.project_plain(store, z);
  Mat fa = proj.project_plain(store, Mat(h.col(0)));
  Mat fb = proj.project_plain(store, Mat(2.0 * h.col(0)));
  CHECK(((fb - f0) - 2.0 * (fa - f0)).norm() < 1e-12);
}

TEST_CASE("latent: state partition slices are complementary") {
  Tape t;
  Mat h(6, 2);
  for (int i = 0; i < h.size(); ++i) h.data()[i] = i;
  Var hv = t.constant(h);
  Var phys = physical_part(t, hv, 4);
  Var env = environment_part(t, hv, 4);
  CHECK(t.val(phys).rows() == 4);
  CHECK(t.val(env).rows() == 2);
  Mat merged(6, 2);
  merged.topRows(4) = t.val(phys);
  merged.bottomRows(2) = t.val(env);
  CHECK((merged - h).norm() == 0.0);
}

TEST_CASE("latent: phase volume of an exact diagonal cloud is the sum of log variances") {
  // Five points with sample variances exactly 4 and 1 and zero covariance.
  Mat samples(5, 2);
  samples << 2, 1, -2, 1, 2, -1, -2, -1, 0, 0;
  PhaseVolume pv = log_phase_volume(samples, 2);
  CHECK(pv.variances[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(pv.variances[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pv.sum_log == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // Requesting only the leading component.
  PhaseVolume top = log_phase_volume(samples, 1);
  CHECK(top.sum_log == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("latent: collapsed directions are floored instead of exploding") {
  Mat samples(6, 3);
  RngStream rng(mix_seed(201, "floor"));
  for (int i = 0; i < 6; ++i) {
    samples(i, 0) = rng.normal();
    samples(i, 1) = 2.0 * rng.normal();
    samples(i, 2) = 7.0;  // constant coordinate: zero variance
  }
  PhaseVolume pv = log_phase_volume(samples, 3);
  CHECK(std::isfinite(pv.sum_log));
  CHECK(pv.variances[2] < 1e-12);
  // The floored component contributes exactly log(1e-8).
  PhaseVolume top2 = log_phase_volume(samples, 2);
  CHECK(pv.sum_log == doctest::Approx(top2.sum_log + std::log(1e-8)).epsilon(1e-9));
}

TEST_CASE("latent: shrinking a cloud shrinks the log volume by the exact amount") {
  RngStream rng(mix_seed(202, "shrink"));
  Mat samples(64, 4);
  for (int i = 0; i < samples.size(); ++i) samples.data()[i] = rng.normal();
  PhaseVolume big = log_phase_volume(samples, 4);
  PhaseVolume small = log_phase_volume(Mat(0.5 * samples), 4);
  // Each variance scales by 0.25: sum log drops by 4 * log 4.
  CHECK(small.sum_log ==
        doctest::Approx(big.sum_log - 4.0 * std::log(4.0)).epsilon(1e-9));
  CHECK(volume_shrink_percent(big.sum_log, small.sum_log) > 0.0);
}

TEST_CASE("latent: shrink percentage matches a hand-computed example") {
  CHECK(volume_shrink_percent(14.276, 13.227) == doctest::Approx(7.348).epsilon(1e-3));
  CHECK(volume_shrink_percent(21.224, 19.439) == doctest::Approx(8.411).epsilon(1e-3));
  CHECK_THROWS_AS(volume_shrink_percent(0.0, 1.0), Error);
}

TEST_CASE("latent: degenerate inputs are rejected") {
  Mat one_row(1, 3);
  one_row << 1, 2, 3;
  CHECK_THROWS_AS(log_phase_volume(one_row, 2), Error);
  Mat ok(4, 2);
  ok.setRandom();
  CHECK_THROWS_AS(log_phase_volume(ok, 3), Error);
  CHECK_THROWS_AS(log_phase_volume(ok, 0), Error);
}
