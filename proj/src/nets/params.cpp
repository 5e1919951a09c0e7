#include "nets/params.hpp"

#include <cmath>

#include "core/error.hpp"

namespace phwm::nets {

int ParamStore::add(const std::string& name, int rows, int cols) {
  require(rows > 0 && cols > 0, ErrorKind::Dimension, "param block '" + name + "': empty shape");
  require(index_.find(name) == index_.end(), ErrorKind::Config,
          "param block '" + name + "' registered twice");
  ParamBlock b{name, rows, cols, static_cast<int>(values_.size())};
  values_.resize(values_.size() + static_cast<size_t>(rows) * cols, 0.0);
  int id = static_cast<int>(blocks_.size());
  blocks_.push_back(b);
  index_[name] = id;
  return id;
}

int ParamStore::add_uniform(const std::string& name, int rows, int cols, double half_width,
                            RngStream& rng) {
  int id = add(name, rows, cols);
  auto m = view(id);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-half_width, half_width);
  return id;
}

int ParamStore::add_constant(const std::string& name, int rows, int cols, double value) {
  int id = add(name, rows, cols);
  view(id).setConstant(value);
  return id;
}

int ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorKind::Config, "unknown param block '" + name + "'");
  return it->second;
}

Eigen::Map<Eigen::MatrixXd> ParamStore::view(int id) {
  const ParamBlock& b = block(id);
  return {values_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const Eigen::MatrixXd> ParamStore::view(int id) const {
  const ParamBlock& b = block(id);
  return {values_.data() + b.offset, b.rows, b.cols};
}

ad::Mat ParamStore::matrix(int id) const { return view(id); }

void ParamStore::load_values(const std::vector<double>& v) {
  require(v.size() == values_.size(), ErrorKind::Version,
          "parameter vector size mismatch: expected " + std::to_string(values_.size()) +
              ", got " + std::to_string(v.size()));
  values_ = v;
}

ad::Var ParamBinding::use(int block_id) {
  auto it = used_.find(block_id);
  if (it != used_.end()) return it->second;
  ad::Mat value = store_->matrix(block_id);
  ad::Var v = trainable_ ? tape_->leaf(value) : tape_->constant(value);
  used_.emplace(block_id, v);
  return v;
}

std::vector<double> ParamBinding::grad_flat(ad::Var loss) {
  std::vector<double> flat(static_cast<size_t>(store_->total_size()), 0.0);
  if (!trainable_ || used_.empty()) return flat;
  std::vector<int> ids;
  std::vector<ad::Var> leaves;
  for (const auto& [id, var] : used_) {
    ids.push_back(id);
    leaves.push_back(var);
  }
  std::vector<ad::Var> grads = tape_->gradient(loss, leaves);
  for (size_t k = 0; k < ids.size(); ++k) {
    const ParamBlock& b = store_->block(ids[k]);
    const ad::Mat& g = tape_->val(grads[k]);
    require(g.rows() == b.rows && g.cols() == b.cols, ErrorKind::Dimension,
            "gradient shape mismatch for block '" + b.name + "'");
    Eigen::Map<Eigen::MatrixXd>(flat.data() + b.offset, b.rows, b.cols) = g;
  }
  return flat;
}

void Adam::step(ParamStore& store, const std::vector<double>& grad) {
  auto& p = store.values();
  require(grad.size() == p.size(), ErrorKind::Dimension, "adam: gradient size mismatch");
  if (m_.empty()) {
    m_.assign(p.size(), 0.0);
    v_.assign(p.size(), 0.0);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < p.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    p[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
  }
}

void Adam::restore(long long t, std::vector<double> m, std::vector<double> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace phwm::nets
