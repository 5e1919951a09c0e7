#include "phcore/phcore.hpp"

#include <cmath>

#include "core/error.hpp"

namespace phwm::phcore {

namespace {
double softplus1(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Mat tril(const Mat& m) { return m.triangularView<Eigen::Lower>(); }
}  // namespace

Mat make_skew(const Mat& a_raw) {
  require(a_raw.rows() == a_raw.cols(), ErrorKind::Dimension, "make_skew: square matrix required");
  return a_raw - a_raw.transpose();
}

Mat make_dissipation(const Mat& b_raw, const Eigen::VectorXd& d_raw) {
  require(b_raw.rows() == b_raw.cols() && b_raw.rows() == d_raw.size(), ErrorKind::Dimension,
          "make_dissipation: inconsistent shapes");
  Mat lb = tril(b_raw);
  Mat r = lb * lb.transpose();
  for (Eigen::Index i = 0; i < d_raw.size(); ++i) r(i, i) += softplus1(d_raw[i]);
  return r;
}

PhCore PhCore::create(ParamStore& store, RngStream& rng, const std::string& prefix,
                      const PhSpec& spec) {
  require(spec.n > 0 && spec.d_a > 0, ErrorKind::Dimension, "ph core: bad dimensions");
  PhCore core;
  core.spec_ = spec;
  core.tril_mask_ = Mat::Zero(spec.n, spec.n);
  for (int i = 0; i < spec.n; ++i)
    for (int j = 0; j <= i; ++j) core.tril_mask_(i, j) = 1.0;

  nets::MlpSpec hs;
  hs.in = spec.n;
  hs.hidden = spec.h_hidden;
  hs.out = 1;
  core.h_net_ = nets::Mlp::create(store, rng, prefix + ".h", hs);

  if (!spec.state_dependent) {
    core.a_raw_ = store.add_uniform(prefix + ".a_raw", spec.n, spec.n, 0.3, rng);
    core.b_raw_ = store.add_uniform(prefix + ".b_raw", spec.n, spec.n, 0.1, rng);
    core.d_raw_ = store.add_constant(prefix + ".d_raw", spec.n, 1, -2.0);
    core.g_ = store.add_uniform(prefix + ".g", spec.n, spec.d_a, 0.3, rng);
  } else {
    auto gen = [&](const std::string& name, int out) {
      nets::MlpSpec s;
      s.in = spec.n;
      s.hidden = spec.net_hidden;
      s.out = out;
      s.gain = 0.5;
      return nets::Mlp::create(store, rng, prefix + name, s);
    };
    core.j_net_ = gen(".j_net", spec.n * spec.n);
    core.b_net_ = gen(".b_net", spec.n * spec.n);
    core.d_net_ = gen(".d_net", spec.n);
    core.g_net_ = gen(".g_net", spec.n * spec.d_a);
  }
  return core;
}

Var PhCore::hamiltonian(Tape& t, ParamBinding& bind, Var x) const {
  if (h_override_) return h_override_(t, bind, x);
  return h_net_.forward(t, bind, x);
}

Var PhCore::grad_h(Tape& t, ParamBinding& bind, Var x) const {
  Var h = hamiltonian(t, bind, x);
  require(t.val(h).rows() == 1, ErrorKind::Dimension, "hamiltonian must be 1 x batch");
  // Summing over the batch gives each column's own gradient, since columns do not
  // interact inside the energy network.
  return t.grad_one(t.sum(h), x);
}

Var PhCore::skew_apply(Tape& t, ParamBinding& bind, Var x, Var g) const {
  const int n = spec_.n;
  if (!spec_.state_dependent) {
    Var a = bind.use(a_raw_);
    return t.sub(t.matmul(a, g), t.matmul(t.transpose(a), g));
  }
  Var packed = j_net_.forward(t, bind, x);
  return t.sub(t.bmat_vec(packed, g, n, n), t.bmat_tvec(packed, g, n, n));
}

Var PhCore::dissipation_apply(Tape& t, ParamBinding& bind, Var x, Var g) const {
  const int n = spec_.n;
  if (!spec_.state_dependent) {
    Var lb = t.hadamard(bind.use(b_raw_), t.constant(tril_mask_));
    Var quad = t.matmul(lb, t.matmul(t.transpose(lb), g));
    Var diag = t.mul_colvec(g, t.softplus(bind.use(d_raw_)));
    return t.add(quad, diag);
  }
  const Eigen::Index cols = t.val(g).cols();
  Mat mask_packed(static_cast<Eigen::Index>(n) * n, cols);
  Eigen::Map<const Eigen::VectorXd> mvec(tril_mask_.data(), static_cast<Eigen::Index>(n) * n);
  for (Eigen::Index b = 0; b < cols; ++b) mask_packed.col(b) = mvec;
  Var lb = t.hadamard(b_net_.forward(t, bind, x), t.constant(mask_packed));
  Var quad = t.bmat_vec(lb, t.bmat_tvec(lb, g, n, n), n, n);
  Var diag = t.hadamard(t.softplus(d_net_.forward(t, bind, x)), g);
  return t.add(quad, diag);
}

Var PhCore::port_apply(Tape& t, ParamBinding& bind, Var x, Var a) const {
  if (!spec_.state_dependent) return t.matmul(bind.use(g_), a);
  Var packed = g_net_.forward(t, bind, x);
  return t.bmat_vec(packed, a, spec_.n, spec_.d_a);
}

Var PhCore::field(Tape& t, ParamBinding& bind, Var x, Var a) const {
  require(t.val(x).rows() == spec_.n, ErrorKind::Dimension, "ph field: state dim mismatch");
  require(t.val(a).rows() == spec_.d_a && t.val(a).cols() == t.val(x).cols(),
          ErrorKind::Dimension, "ph field: action shape mismatch");
  Var g = grad_h(t, bind, x);
  Var flow = t.sub(skew_apply(t, bind, x, g), dissipation_apply(t, bind, x, g));
  Var out = t.add(flow, port_apply(t, bind, x, a));
  require(t.val(out).allFinite(), ErrorKind::Numerical, "ph field: non-finite time derivative");
  return out;
}

Mat PhCore::j_matrix(const ParamStore& store) const {
  require(!spec_.state_dependent, ErrorKind::Config,
          "j_matrix: state-dependent mode needs a state, use j_matrix_at");
  return make_skew(store.view(a_raw_));
}

Mat PhCore::r_matrix(const ParamStore& store) const {
  require(!spec_.state_dependent, ErrorKind::Config,
          "r_matrix: state-dependent mode needs a state, use r_matrix_at");
  return make_dissipation(store.view(b_raw_), store.view(d_raw_).col(0));
}

Mat PhCore::j_matrix_at(const ParamStore& store, const Eigen::VectorXd& x) const {
  if (!spec_.state_dependent) return j_matrix(store);
  Mat packed = j_net_.forward_plain(store, x);
  return make_skew(Eigen::Map<const Mat>(packed.data(), spec_.n, spec_.n));
}

Mat PhCore::r_matrix_at(const ParamStore& store, const Eigen::VectorXd& x) const {
  if (!spec_.state_dependent) return r_matrix(store);
  Mat packed = b_net_.forward_plain(store, x);
  Mat d = d_net_.forward_plain(store, x);
  return make_dissipation(Eigen::Map<const Mat>(packed.data(), spec_.n, spec_.n),
                          Eigen::VectorXd(d.col(0)));
}

Mat PhCore::g_matrix_at(const ParamStore& store, const Eigen::VectorXd& x) const {
  if (!spec_.state_dependent) return store.view(g_);
  Mat packed = g_net_.forward_plain(store, x);
  return Eigen::Map<const Mat>(packed.data(), spec_.n, spec_.d_a);
}

Eigen::VectorXd PhCore::grad_h_at(const ParamStore& store, const Eigen::VectorXd& x) const {
  Tape t;
  ParamBinding bind(t, store, /*trainable=*/false);
  Var xv = t.leaf(Mat(x));
  return t.val(grad_h(t, bind, xv));
}

double PhCore::h_at(const ParamStore& store, const Eigen::VectorXd& x) const {
  Tape t;
  ParamBinding bind(t, store, /*trainable=*/false);
  return t.scalar(hamiltonian(t, bind, t.constant(Mat(x))));
}

Var rk4_step(Tape& t, const std::function<Var(Tape&, Var)>& field, Var x, double dt) {
  Var k1 = field(t, x);
  Var k2 = field(t, t.add(x, t.scale(k1, dt / 2.0)));
  Var k3 = field(t, t.add(x, t.scale(k2, dt / 2.0)));
  Var k4 = field(t, t.add(x, t.scale(k3, dt)));
  Var incr = t.add(t.add(k1, k4), t.scale(t.add(k2, k3), 2.0));
  Var out = t.add(x, t.scale(incr, dt / 6.0));
  require(t.val(out).allFinite(), ErrorKind::Numerical, "rk4: non-finite state after step");
  return out;
}

Var shadow_loss(Tape& t, Var x_pred, Var x_target) {
  Var d = t.sub(x_pred, t.stop_gradient(x_target));
  const auto cols = static_cast<double>(t.val(d).cols());
  return t.scale(t.sum(t.hadamard(d, d)), 1.0 / cols);
}

double curriculum_weight(long long step, long long total_steps, double lambda_max,
                         double warmup_frac, double ramp_frac) {
  require(total_steps > 0, ErrorKind::Config, "curriculum: total_steps must be positive");
  require(step >= 0, ErrorKind::Config, "curriculum: negative step");
  require(warmup_frac >= 0.0 && ramp_frac >= 0.0 && warmup_frac + ramp_frac <= 1.0 + 1e-12,
          ErrorKind::Config, "curriculum: fractions must be nonnegative and sum to at most 1");
  const double s = static_cast<double>(step) / static_cast<double>(total_steps);
  if (s < warmup_frac) return 0.0;
  if (ramp_frac <= 0.0) return lambda_max;
  const double r = (s - warmup_frac) / ramp_frac;
  return lambda_max * std::min(1.0, std::max(0.0, r));
}

}  // namespace phwm::phcore
