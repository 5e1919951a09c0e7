#include "nets/net.hpp"

#include <cmath>

#include "core/error.hpp"

namespace phwm::nets {

namespace {

double uniform_half_width(int fan_in, double gain) {
  // Variance 1/fan_in at gain 1.
  return gain * std::sqrt(3.0 / static_cast<double>(fan_in));
}

int add_weight(ParamStore& store, RngStream& rng, const std::string& name, int rows, int cols,
               double gain, bool zero_init) {
  if (zero_init) return store.add_constant(name, rows, cols, 0.0);
  return store.add_uniform(name, rows, cols, uniform_half_width(cols, gain), rng);
}

double softplus1(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid1(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

ad::Mat sigmoid_plain(const ad::Mat& x) {
  return x.unaryExpr([](double v) { return sigmoid1(v); });
}

}  // namespace

ad::Var activate(ad::Tape& t, ad::Var x, Act act) {
  return act == Act::Tanh ? t.tanh(x) : t.softplus(x);
}

ad::Mat activate_plain(const ad::Mat& x, Act act) {
  if (act == Act::Tanh) return x.array().tanh();
  return x.unaryExpr([](double v) { return softplus1(v); });
}

Mlp Mlp::create(ParamStore& store, RngStream& rng, const std::string& prefix, const MlpSpec& spec) {
  require(spec.in > 0 && spec.out > 0, ErrorKind::Dimension, "mlp '" + prefix + "': bad spec");
  Mlp net;
  net.spec_ = spec;
  int in = spec.in;
  std::vector<int> widths = spec.hidden;
  widths.push_back(spec.out);
  for (size_t l = 0; l < widths.size(); ++l) {
    std::string tag = prefix + ".w" + std::to_string(l);
    net.w_ids_.push_back(add_weight(store, rng, tag, widths[l], in, spec.gain, spec.zero_init));
    net.b_ids_.push_back(store.add_constant(prefix + ".b" + std::to_string(l), widths[l], 1, 0.0));
    in = widths[l];
  }
  return net;
}

ad::Var Mlp::forward(ad::Tape& t, ParamBinding& bind, ad::Var x) const {
  require(t.val(x).rows() == spec_.in, ErrorKind::Dimension, "mlp forward: input dim mismatch");
  ad::Var h = x;
  for (size_t l = 0; l < w_ids_.size(); ++l) {
    h = t.add_colvec(t.matmul(bind.use(w_ids_[l]), h), bind.use(b_ids_[l]));
    if (l + 1 < w_ids_.size()) h = activate(t, h, spec_.act);
  }
  return h;
}

ad::Mat Mlp::forward_plain(const ParamStore& store, const ad::Mat& x) const {
  require(x.rows() == spec_.in, ErrorKind::Dimension, "mlp forward: input dim mismatch");
  ad::Mat h = x;
  for (size_t l = 0; l < w_ids_.size(); ++l) {
    h = (store.view(w_ids_[l]) * h).colwise() + Eigen::VectorXd(store.view(b_ids_[l]).col(0));
    if (l + 1 < w_ids_.size()) h = activate_plain(h, spec_.act);
  }
  return h;
}

GruCell GruCell::create(ParamStore& store, RngStream& rng, const std::string& prefix, int in,
                        int state, double gain, bool zero_init) {
  GruCell c;
  c.in_ = in;
  c.state_ = state;
  c.wu_ = add_weight(store, rng, prefix + ".wu", state, in, gain, zero_init);
  c.uu_ = add_weight(store, rng, prefix + ".uu", state, state, gain, zero_init);
  c.bu_ = store.add_constant(prefix + ".bu", state, 1, 0.0);
  c.wr_ = add_weight(store, rng, prefix + ".wr", state, in, gain, zero_init);
  c.ur_ = add_weight(store, rng, prefix + ".ur", state, state, gain, zero_init);
  c.br_ = store.add_constant(prefix + ".br", state, 1, 0.0);
  c.wc_ = add_weight(store, rng, prefix + ".wc", state, in, gain, zero_init);
  c.uc_ = add_weight(store, rng, prefix + ".uc", state, state, gain, zero_init);
  c.bc_ = store.add_constant(prefix + ".bc", state, 1, 0.0);
  return c;
}

ad::Var GruCell::forward(ad::Tape& t, ParamBinding& bind, ad::Var x, ad::Var h) const {
  require(t.val(x).rows() == in_ && t.val(h).rows() == state_, ErrorKind::Dimension,
          "gru forward: input dims mismatch");
  ad::Var u = t.sigmoid(t.add_colvec(
      t.add(t.matmul(bind.use(wu_), x), t.matmul(bind.use(uu_), h)), bind.use(bu_)));
  ad::Var r = t.sigmoid(t.add_colvec(
      t.add(t.matmul(bind.use(wr_), x), t.matmul(bind.use(ur_), h)), bind.use(br_)));
  ad::Var c = t.tanh(t.add_colvec(
      t.add(t.matmul(bind.use(wc_), x), t.matmul(bind.use(uc_), t.hadamard(r, h))),
      bind.use(bc_)));
  ad::Var ones = t.constant(ad::Mat::Ones(t.val(u).rows(), t.val(u).cols()));
  return t.add(t.hadamard(t.sub(ones, u), h), t.hadamard(u, c));
}

ad::Mat GruCell::forward_plain(const ParamStore& s, const ad::Mat& x, const ad::Mat& h) const {
  ad::Mat u = sigmoid_plain(((s.view(wu_) * x + s.view(uu_) * h).colwise() +
                             Eigen::VectorXd(s.view(bu_).col(0))));
  ad::Mat r = sigmoid_plain(((s.view(wr_) * x + s.view(ur_) * h).colwise() +
                             Eigen::VectorXd(s.view(br_).col(0))));
  ad::Mat c = (((s.view(wc_) * x + s.view(uc_) * r.cwiseProduct(h)).colwise() +
                Eigen::VectorXd(s.view(bc_).col(0)))
                   .array()
                   .tanh());
  return (1.0 - u.array()) * h.array() + u.array() * c.array();
}

Tcn Tcn::create(ParamStore& store, RngStream& rng, const std::string& prefix, const TcnSpec& spec) {
  require(spec.d_in > 0 && spec.positions > 0 && spec.d_out > 0 && spec.channels > 0,
          ErrorKind::Dimension, "tcn '" + prefix + "': bad spec");
  Tcn net;
  net.spec_ = spec;
  int pos = spec.positions;
  int in_ch = spec.d_in;
  int layer = 0;
  while (pos > 1) {
    Layer L;
    L.width = std::min(3, pos);
    L.in_ch = in_ch;
    L.out_ch = spec.channels;
    L.positions_out = pos - L.width + 1;
    for (int k = 0; k < L.width; ++k) {
      std::string tag = prefix + ".l" + std::to_string(layer) + ".k" + std::to_string(k);
      L.k_ids.push_back(add_weight(store, rng, tag, L.out_ch, in_ch,
                                   spec.gain / std::sqrt(static_cast<double>(L.width)),
                                   spec.zero_init));
    }
    L.b_id = store.add_constant(prefix + ".l" + std::to_string(layer) + ".b", L.out_ch, 1, 0.0);
    net.layers_.push_back(L);
    pos = L.positions_out;
    in_ch = L.out_ch;
    ++layer;
  }
  net.head_w_ = add_weight(store, rng, prefix + ".head.w", spec.d_out, in_ch, spec.gain,
                           spec.zero_init);
  net.head_b_ = store.add_constant(prefix + ".head.b", spec.d_out, 1, 0.0);
  return net;
}

ad::Var Tcn::forward(ad::Tape& t, ParamBinding& bind, ad::Var window) const {
  require(t.val(window).rows() == static_cast<Eigen::Index>(spec_.d_in) * spec_.positions,
          ErrorKind::Dimension, "tcn forward: window height mismatch");
  ad::Var h = window;
  int pos = spec_.positions;
  int ch = spec_.d_in;
  for (const Layer& L : layers_) {
    ad::Var out;  // stacked output positions
    for (int p = 0; p < L.positions_out; ++p) {
      ad::Var acc;
      for (int k = 0; k < L.width; ++k) {
        ad::Var xk = t.rows(h, (p + k) * ch, ch);
        ad::Var term = t.matmul(bind.use(L.k_ids[k]), xk);
        acc = (k == 0) ? term : t.add(acc, term);
      }
      acc = activate(t, t.add_colvec(acc, bind.use(L.b_id)), spec_.act);
      out = (p == 0) ? acc : t.concat_rows(out, acc);
    }
    h = out;
    pos = L.positions_out;
    ch = L.out_ch;
  }
  (void)pos;
  return t.add_colvec(t.matmul(bind.use(head_w_), h), bind.use(head_b_));
}

ad::Mat Tcn::forward_plain(const ParamStore& s, const ad::Mat& window) const {
  ad::Mat h = window;
  int ch = spec_.d_in;
  for (const Layer& L : layers_) {
    ad::Mat out(static_cast<Eigen::Index>(L.positions_out) * L.out_ch, window.cols());
    for (int p = 0; p < L.positions_out; ++p) {
      ad::Mat acc = ad::Mat::Zero(L.out_ch, window.cols());
      for (int k = 0; k < L.width; ++k)
        acc += s.view(L.k_ids[k]) * h.middleRows(static_cast<Eigen::Index>(p + k) * ch, ch);
      acc = activate_plain(acc.colwise() + Eigen::VectorXd(s.view(L.b_id).col(0)), spec_.act);
      out.middleRows(static_cast<Eigen::Index>(p) * L.out_ch, L.out_ch) = acc;
    }
    h = out;
    ch = L.out_ch;
  }
  return (s.view(head_w_) * h).colwise() + Eigen::VectorXd(s.view(head_b_).col(0));
}

}  // namespace phwm::nets
