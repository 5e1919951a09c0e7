#include "nets/field.hpp"

namespace phwm::nets {

ScalarField make_scalar_field(ParamStore& store, RngStream& rng, const std::string& prefix,
                              int in_dim, const std::vector<int>& hidden, Act act) {
  MlpSpec spec;
  spec.in = in_dim;
  spec.hidden = hidden;
  spec.out = 1;
  spec.act = act;
  return ScalarField{Mlp::create(store, rng, prefix, spec), &store};
}

double field_eval(const ScalarField& f, const Eigen::VectorXd& x) {
  return f.net.forward_plain(*f.store, x)(0, 0);
}

Eigen::VectorXd field_grad(const ScalarField& f, const Eigen::VectorXd& x) {
  ad::Tape t;
  ad::Var xv = t.leaf(x);
  ParamBinding bind(t, *f.store, /*trainable=*/false);
  ad::Var y = f.net.forward(t, bind, xv);
  return t.val(t.grad_one(y, xv));
}

Eigen::VectorXd field_hvp(const ScalarField& f, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& v) {
  ad::Tape t;
  ad::Var xv = t.leaf(x);
  ParamBinding bind(t, *f.store, /*trainable=*/false);
  ad::Var y = f.net.forward(t, bind, xv);
  ad::Var g = t.grad_one(y, xv);
  // Differentiate the directional derivative g.v once more.
  ad::Var gv = t.dot(g, t.constant(ad::Mat(v)));
  return t.val(t.grad_one(gv, xv));
}

std::vector<double> field_param_grad(const ScalarField& f, const Eigen::VectorXd& x) {
  ad::Tape t;
  ad::Var xv = t.constant(ad::Mat(x));
  ParamBinding bind(t, *f.store, /*trainable=*/true);
  ad::Var y = f.net.forward(t, bind, xv);
  return bind.grad_flat(y);
}

}  // namespace phwm::nets
