#pragma once
#include <Eigen/Dense>

#include "nets/net.hpp"

namespace phwm::nets {

// An MLP with scalar output together with the store holding its weights. Used for
// learned energy functions and anywhere a differentiable R^n -> R map is needed.
struct ScalarField {
  Mlp net;
  const ParamStore* store = nullptr;
};

ScalarField make_scalar_field(ParamStore& store, RngStream& rng, const std::string& prefix,
                              int in_dim, const std::vector<int>& hidden, Act act = Act::Tanh);

double field_eval(const ScalarField& f, const Eigen::VectorXd& x);
Eigen::VectorXd field_grad(const ScalarField& f, const Eigen::VectorXd& x);
Eigen::VectorXd field_hvp(const ScalarField& f, const Eigen::VectorXd& x, const Eigen::VectorXd& v);
// d f(x) / d theta as a flat vector over the whole store (zeros outside f's blocks).
std::vector<double> field_param_grad(const ScalarField& f, const Eigen::VectorXd& x);

}  // namespace phwm::nets
