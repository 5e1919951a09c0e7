#include "energy/energy.hpp"

#include "core/error.hpp"

namespace phwm::energy {

EnergyModel EnergyModel::create(ParamStore& store, RngStream& rng, const std::string& prefix,
                                const EnergySpec& spec) {
  require(spec.d_q > 0 && spec.d_a > 0 && spec.k >= 1, ErrorKind::Dimension,
          "energy model: bad spec");
  EnergyModel m;
  m.spec_ = spec;
  const int d = spec.d_q;
  const int dt_ = m.d_tilde();
  const int n_tri = d * (d + 1) / 2;

  nets::TcnSpec ts;
  ts.d_in = d;
  ts.positions = spec.k + 1;
  ts.channels = spec.tcn_channels;
  ts.d_out = d;
  m.p_net_ = nets::Tcn::create(store, rng, prefix + ".p", ts);

  auto head = [&](const std::string& name, int in, int out) {
    nets::MlpSpec s;
    s.in = in;
    s.hidden = spec.hidden;
    s.out = out;
    return nets::Mlp::create(store, rng, prefix + name, s);
  };
  m.v_net_ = head(".v", d, 1);
  m.l_net_ = head(".l", d, n_tri);
  m.g_net_ = head(".g", d, d * dt_);
  m.d_net_ = head(".d", 2 * d, d);

  nets::MlpSpec es;
  es.in = spec.d_a;
  es.hidden = {spec.enc_hidden};
  es.out = dt_;
  m.enc_ = nets::Mlp::create(store, rng, prefix + ".enc", es);

  // Assembly matrices placing head outputs into a packed column-major L. The
  // first d head outputs are the (softplus-wrapped) diagonal; the rest fill the
  // strict lower triangle scanning down each column.
  m.scatter_diag_ = Mat::Zero(d * d, d);
  for (int i = 0; i < d; ++i) m.scatter_diag_(i + i * d, i) = 1.0;
  const int n_strict = n_tri - d;
  m.scatter_strict_ = Mat::Zero(d * d, std::max(1, n_strict));
  int idx = 0;
  for (int j = 0; j < d; ++j)
    for (int i = j + 1; i < d; ++i) m.scatter_strict_(i + j * d, idx++) = 1.0;
  return m;
}

Var EnergyModel::momentum(Tape& t, ParamBinding& bind, Var window) const {
  if (momentum_override) return momentum_override(t, window);
  return p_net_.forward(t, bind, window);
}

Var EnergyModel::potential(Tape& t, ParamBinding& bind, Var q) const {
  if (potential_override) return potential_override(t, q);
  return v_net_.forward(t, bind, q);
}

Var EnergyModel::chol_from_raw(Tape& t, Var raw, Eigen::Index) const {
  const int d = spec_.d_q;
  const int n_strict = d * (d + 1) / 2 - d;
  Var diag = t.softplus(t.rows(raw, 0, d));
  Var packed = t.matmul(t.constant(scatter_diag_), diag);
  if (n_strict > 0) {
    Var strict = t.rows(raw, d, n_strict);
    packed = t.add(packed, t.matmul(t.constant(scatter_strict_), strict));
  }
  return packed;
}

Var EnergyModel::mass_chol_packed(Tape& t, ParamBinding& bind, Var q) const {
  if (mass_chol_override) return mass_chol_override(t, q);
  Var raw = l_net_.forward(t, bind, q);
  return chol_from_raw(t, raw, t.val(q).cols());
}

Var EnergyModel::hamiltonian(Tape& t, ParamBinding& bind, Var q, Var p) const {
  const int d = spec_.d_q;
  Var v = potential(t, bind, q);
  Var lp = t.bmat_tvec(mass_chol_packed(t, bind, q), p, d, d);  // L'p
  Var kinetic = t.scale(t.col_sums(t.square(lp)), 0.5);         // 0.5 |L'p|^2
  return t.add(v, kinetic);
}

Var EnergyModel::encode_action(Tape& t, ParamBinding& bind, Var a) const {
  if (encoder_override) return encoder_override(t, a);
  return enc_.forward(t, bind, a);
}

Var EnergyModel::damping_diag(Tape& t, ParamBinding& bind, Var q, Var p) const {
  if (damping_override) return damping_override(t, q, p);
  return t.softplus(d_net_.forward(t, bind, t.concat_rows(q, p)));
}

Var EnergyModel::port_packed(Tape& t, ParamBinding& bind, Var q) const {
  if (port_override) return port_override(t, q);
  return g_net_.forward(t, bind, q);
}

EnergyModel::FieldParts EnergyModel::field_parts(Tape& t, ParamBinding& bind, Var q, Var p,
                                                 Var a_enc) const {
  const int d = spec_.d_q;
  Var h = hamiltonian(t, bind, q, p);
  std::vector<Var> grads = t.gradient(t.sum(h), {q, p});
  Var gq = grads[0], gp = grads[1];
  Var dcoef = damping_diag(t, bind, q, p);
  Var forcing = t.bmat_vec(port_packed(t, bind, q), a_enc, d, d_tilde());

  FieldParts out;
  out.grad_q = gq;
  out.grad_p = gp;
  out.f_q = gp;
  out.f_p = t.sub(t.add(t.neg(gq), forcing), t.hadamard(dcoef, gp));
  out.p_work = t.col_sums(t.hadamard(gp, forcing));
  out.p_diss = t.col_sums(t.hadamard(gp, t.hadamard(dcoef, gp)));
  return out;
}

Var EnergyModel::step(Tape& t, ParamBinding& bind, Var q, Var p, Var a, double dt) const {
  const int d = spec_.d_q;
  Var a_enc = encode_action(t, bind, a);
  Var x0 = t.concat_rows(q, p);
  auto field = [&](Tape& tt, Var x) {
    Var qq = tt.rows(x, 0, d);
    Var pp = tt.rows(x, d, d);
    FieldParts parts = field_parts(tt, bind, qq, pp, a_enc);
    return tt.concat_rows(parts.f_q, parts.f_p);
  };
  return phcore::rk4_step(t, field, x0, dt);
}

Var EnergyModel::predict_next_energy(Tape& t, ParamBinding& bind, Var window, Var a,
                                     double dt) const {
  const int d = spec_.d_q;
  Var q_now = t.rows(window, spec_.k * d, d);
  Var p_now = momentum(t, bind, window);
  Var x1 = step(t, bind, q_now, p_now, a, dt);
  return hamiltonian(t, bind, t.rows(x1, 0, d), t.rows(x1, d, d));
}

Var EnergyModel::predict_energy(Tape& t, ParamBinding& bind, Var window) const {
  const int d = spec_.d_q;
  Var q_now = t.rows(window, spec_.k * d, d);
  Var p_now = momentum(t, bind, window);
  return hamiltonian(t, bind, q_now, p_now);
}

Var EnergyModel::loss(Tape& t, ParamBinding& bind, const Batch& batch,
                      const LossWeights& w) const {
  const int d = spec_.d_q;
  const auto B = batch.window.cols();
  require(batch.action.cols() == B && batch.e_now.cols() == B && batch.e_next.cols() == B &&
              batch.p_oracle.cols() == B,
          ErrorKind::Dimension, "energy loss: batch columns disagree");
  require(batch.dt > 0.0, ErrorKind::Config, "energy loss: dt must be positive");

  Var window = t.constant(batch.window);
  Var action = t.constant(batch.action);
  Var e_now = t.constant(Mat((batch.e_now.array() - calib_.offset) / calib_.scale));
  Var e_next = t.constant(Mat((batch.e_next.array() - calib_.offset) / calib_.scale));
  Var p_oracle = t.constant(batch.p_oracle);

  Var q_now = t.rows(window, spec_.k * d, d);
  Var p_hat = momentum(t, bind, window);
  Var h_now = hamiltonian(t, bind, q_now, p_hat);
  Var x1 = step(t, bind, q_now, p_hat, action, batch.dt);
  Var h_next = hamiltonian(t, bind, t.rows(x1, 0, d), t.rows(x1, d, d));

  Var l_now = t.mean_all(t.square(t.sub(h_now, e_now)));
  Var l_next = t.mean_all(t.square(t.sub(h_next, e_next)));
  Var l_p = t.scale(t.sum(t.square(t.sub(p_hat, p_oracle))), 1.0 / static_cast<double>(B));

  Var total = t.add(t.add(t.scale(l_now, w.now), t.scale(l_next, w.next)),
                    t.scale(l_p, w.momentum));
  require(std::isfinite(t.scalar(total)), ErrorKind::Numerical, "energy loss: non-finite");
  return total;
}

double EnergyModel::predict_energy_raw(const ParamStore& store,
                                       const Eigen::VectorXd& window) const {
  Tape t;
  ParamBinding bind(t, store, /*trainable=*/false);
  return to_raw(t.scalar(predict_energy(t, bind, t.constant(Mat(window)))));
}

double EnergyModel::predict_next_energy_raw(const ParamStore& store,
                                            const Eigen::VectorXd& window,
                                            const Eigen::VectorXd& action, double dt) const {
  Tape t;
  ParamBinding bind(t, store, /*trainable=*/false);
  Var h = predict_next_energy(t, bind, t.constant(Mat(window)), t.constant(Mat(action)), dt);
  return to_raw(t.scalar(h));
}

}  // namespace phwm::energy
