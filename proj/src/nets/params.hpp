#pragma once
#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "ad/tape.hpp"
#include "core/rng.hpp"

namespace phwm::nets {

struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  int offset = 0;  // into the flat value vector
};

// Named parameter blocks over one flat double vector. Blocks are appended once at
// model construction; the flat layout (and hence optimizer state indexing) is an
// exact function of construction order.
class ParamStore {
public:
  int add(const std::string& name, int rows, int cols);
  int add_uniform(const std::string& name, int rows, int cols, double half_width, RngStream& rng);
  int add_constant(const std::string& name, int rows, int cols, double value);

  int id(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const ParamBlock& block(int id) const { return blocks_[static_cast<size_t>(id)]; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  int total_size() const { return static_cast<int>(values_.size()); }

  Eigen::Map<Eigen::MatrixXd> view(int id);
  Eigen::Map<const Eigen::MatrixXd> view(int id) const;
  ad::Mat matrix(int id) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // Layout must match exactly; values are overwritten.
  void load_values(const std::vector<double>& v);

private:
  std::vector<ParamBlock> blocks_;
  std::map<std::string, int> index_;
  std::vector<double> values_;
};

// Per-tape view of a store. Each used block becomes one tape node: a leaf when the
// binding is trainable, a constant when the store is frozen (then the reverse
// sweep prunes everything behind it).
class ParamBinding {
public:
  ParamBinding(ad::Tape& tape, const ParamStore& store, bool trainable = true)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  ad::Var use(int block_id);
  bool trainable() const { return trainable_; }

  // Flat gradient of a scalar var, zeros for blocks this tape never used.
  std::vector<double> grad_flat(ad::Var loss);

private:
  ad::Tape* tape_;
  const ParamStore* store_;
  bool trainable_;
  std::map<int, ad::Var> used_;
};

class Adam {
public:
  Adam() = default;
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store, const std::vector<double>& grad);
  double lr() const { return lr_; }
  long long steps() const { return t_; }

  // Raw state access for checkpointing.
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }
  void restore(long long t, std::vector<double> m, std::vector<double> v);

private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace phwm::nets
