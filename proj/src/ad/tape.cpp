#include "ad/tape.hpp"

#include <cmath>

namespace phwm::ad {

namespace {

double softplus1(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid1(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Mat& value) { return push({value, -1, -1, Op::Leaf}); }
Var Tape::constant(const Mat& value) { return push({value, -1, -1, Op::Const}); }
Var Tape::constant(double value) { return constant(Mat::Constant(1, 1, value)); }

const Mat& Tape::val(Var v) const {
  require(v.valid() && v.id < size(), ErrorKind::Dimension, "tape: access to invalid var");
  return nodes_[static_cast<size_t>(v.id)].val;
}

double Tape::scalar(Var v) const {
  const Mat& m = val(v);
  require(m.rows() == 1 && m.cols() == 1, ErrorKind::Dimension, "tape: scalar() on non 1x1 var");
  return m(0, 0);
}

void Tape::reset() { nodes_.clear(); }

#define PHWM_CHECK_SAME(a, b, what)                                                 \
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),         \
          ErrorKind::Dimension, std::string(what) + ": operand shapes differ")

Var Tape::add(Var a, Var b) {
  PHWM_CHECK_SAME(a, b, "add");
  Mat v = val(a) + val(b);
  return push({std::move(v), a.id, b.id, Op::Add});
}

Var Tape::sub(Var a, Var b) {
  PHWM_CHECK_SAME(a, b, "sub");
  Mat v = val(a) - val(b);
  return push({std::move(v), a.id, b.id, Op::Sub});
}

Var Tape::neg(Var a) {
  Mat v = -val(a);
  return push({std::move(v), a.id, -1, Op::Neg});
}

Var Tape::matmul(Var a, Var b) {
  require(val(a).cols() == val(b).rows(), ErrorKind::Dimension, "matmul: inner dimensions differ");
  Mat v = val(a) * val(b);
  return push({std::move(v), a.id, b.id, Op::MatMul});
}

Var Tape::transpose(Var a) {
  Mat v = val(a).transpose();
  return push({std::move(v), a.id, -1, Op::Transpose});
}

Var Tape::hadamard(Var a, Var b) {
  PHWM_CHECK_SAME(a, b, "hadamard");
  Mat v = val(a).cwiseProduct(val(b));
  return push({std::move(v), a.id, b.id, Op::Hadamard});
}

Var Tape::scale(Var a, double c) {
  Mat v = c * val(a);
  Node n{std::move(v), a.id, -1, Op::ScaleC};
  n.c0 = c;
  return push(std::move(n));
}

Var Tape::mul_scalar(Var a, Var s) {
  require(val(s).rows() == 1 && val(s).cols() == 1, ErrorKind::Dimension,
          "mul_scalar: multiplier must be 1x1");
  Mat v = val(s)(0, 0) * val(a);
  return push({std::move(v), a.id, s.id, Op::MulScalar});
}

Var Tape::add_colvec(Var a, Var v) {
  require(val(v).cols() == 1 && val(v).rows() == val(a).rows(), ErrorKind::Dimension,
          "add_colvec: expected column vector matching row count");
  Mat r = val(a).colwise() + Eigen::VectorXd(val(v).col(0));
  return push({std::move(r), a.id, v.id, Op::AddColVec});
}

Var Tape::mul_colvec(Var a, Var v) {
  require(val(v).cols() == 1 && val(v).rows() == val(a).rows(), ErrorKind::Dimension,
          "mul_colvec: expected column vector matching row count");
  Mat r = val(a).array().colwise() * Eigen::ArrayXd(val(v).col(0));
  return push({std::move(r), a.id, v.id, Op::MulColVec});
}

Var Tape::tanh(Var a) {
  Mat v = val(a).array().tanh();
  return push({std::move(v), a.id, -1, Op::Tanh});
}

Var Tape::sigmoid(Var a) {
  Mat v = val(a).unaryExpr([](double x) { return sigmoid1(x); });
  return push({std::move(v), a.id, -1, Op::Sigmoid});
}

Var Tape::softplus(Var a) {
  Mat v = val(a).unaryExpr([](double x) { return softplus1(x); });
  return push({std::move(v), a.id, -1, Op::Softplus});
}

Var Tape::exp(Var a) {
  Mat v = val(a).array().exp();
  return push({std::move(v), a.id, -1, Op::Exp});
}

Var Tape::sin(Var a) {
  Mat v = val(a).array().sin();
  return push({std::move(v), a.id, -1, Op::Sin});
}

Var Tape::cos(Var a) {
  Mat v = val(a).array().cos();
  return push({std::move(v), a.id, -1, Op::Cos});
}

Var Tape::sum(Var a) {
  Mat v = Mat::Constant(1, 1, val(a).sum());
  return push({std::move(v), a.id, -1, Op::Sum});
}

Var Tape::rows(Var a, int start, int count) {
  require(start >= 0 && count >= 0 && start + count <= val(a).rows(), ErrorKind::Dimension,
          "rows: slice out of range");
  Mat v = val(a).middleRows(start, count);
  Node n{std::move(v), a.id, -1, Op::Rows};
  n.i0 = start;
  n.i1 = static_cast<int>(val(a).rows());
  return push(std::move(n));
}

Var Tape::pad_rows(Var a, int start, int total_rows) {
  require(start >= 0 && start + val(a).rows() <= total_rows, ErrorKind::Dimension,
          "pad_rows: slice out of range");
  Mat v = Mat::Zero(total_rows, val(a).cols());
  v.middleRows(start, val(a).rows()) = val(a);
  Node n{std::move(v), a.id, -1, Op::PadRows};
  n.i0 = start;
  n.i1 = static_cast<int>(nodes_[static_cast<size_t>(a.id)].val.rows());
  return push(std::move(n));
}

Var Tape::cols(Var a, int start, int count) {
  require(start >= 0 && count >= 0 && start + count <= val(a).cols(), ErrorKind::Dimension,
          "cols: slice out of range");
  Mat v = val(a).middleCols(start, count);
  Node n{std::move(v), a.id, -1, Op::Cols};
  n.i0 = start;
  n.i1 = static_cast<int>(val(a).cols());
  return push(std::move(n));
}

Var Tape::pad_cols(Var a, int start, int total_cols) {
  require(start >= 0 && start + val(a).cols() <= total_cols, ErrorKind::Dimension,
          "pad_cols: slice out of range");
  Mat v = Mat::Zero(val(a).rows(), total_cols);
  v.middleCols(start, val(a).cols()) = val(a);
  Node n{std::move(v), a.id, -1, Op::PadCols};
  n.i0 = start;
  n.i1 = static_cast<int>(nodes_[static_cast<size_t>(a.id)].val.cols());
  return push(std::move(n));
}

Var Tape::concat_rows(Var a, Var b) {
  require(val(a).cols() == val(b).cols(), ErrorKind::Dimension, "concat_rows: column counts differ");
  Mat v(val(a).rows() + val(b).rows(), val(a).cols());
  v.topRows(val(a).rows()) = val(a);
  v.bottomRows(val(b).rows()) = val(b);
  return push({std::move(v), a.id, b.id, Op::ConcatRows});
}

Var Tape::concat_cols(Var a, Var b) {
  require(val(a).rows() == val(b).rows(), ErrorKind::Dimension, "concat_cols: row counts differ");
  Mat v(val(a).rows(), val(a).cols() + val(b).cols());
  v.leftCols(val(a).cols()) = val(a);
  v.rightCols(val(b).cols()) = val(b);
  return push({std::move(v), a.id, b.id, Op::ConcatCols});
}

Var Tape::clamp(Var a, double lo, double hi) {
  require(lo < hi, ErrorKind::Dimension, "clamp: empty interval");
  Mat v = val(a).array().min(hi).max(lo);
  Node n{std::move(v), a.id, -1, Op::Clamp};
  n.c0 = lo;
  n.c1 = hi;
  return push(std::move(n));
}

Var Tape::stop_gradient(Var a) {
  Mat v = val(a);
  return push({std::move(v), a.id, -1, Op::StopGrad});
}

Var Tape::bmat_vec(Var packed, Var x, int r, int c) {
  const Mat& p = val(packed);
  const Mat& xv = val(x);
  require(p.rows() == static_cast<Eigen::Index>(r) * c, ErrorKind::Dimension,
          "bmat_vec: packed rows != r*c");
  require(xv.rows() == c && xv.cols() == p.cols(), ErrorKind::Dimension,
          "bmat_vec: vector operand shape mismatch");
  Mat v(r, p.cols());
  for (Eigen::Index b = 0; b < p.cols(); ++b) {
    Eigen::Map<const Mat> m(p.col(b).data(), r, c);
    v.col(b) = m * xv.col(b);
  }
  Node n{std::move(v), packed.id, x.id, Op::BMatVec};
  n.i0 = r;
  n.i1 = c;
  return push(std::move(n));
}

Var Tape::bmat_tvec(Var packed, Var z, int r, int c) {
  const Mat& p = val(packed);
  const Mat& zv = val(z);
  require(p.rows() == static_cast<Eigen::Index>(r) * c, ErrorKind::Dimension,
          "bmat_tvec: packed rows != r*c");
  require(zv.rows() == r && zv.cols() == p.cols(), ErrorKind::Dimension,
          "bmat_tvec: vector operand shape mismatch");
  Mat v(c, p.cols());
  for (Eigen::Index b = 0; b < p.cols(); ++b) {
    Eigen::Map<const Mat> m(p.col(b).data(), r, c);
    v.col(b) = m.transpose() * zv.col(b);
  }
  Node n{std::move(v), packed.id, z.id, Op::BMatTVec};
  n.i0 = r;
  n.i1 = c;
  return push(std::move(n));
}

Var Tape::bouter_pack(Var z, Var x) {
  const Mat& zv = val(z);
  const Mat& xv = val(x);
  require(zv.cols() == xv.cols(), ErrorKind::Dimension, "bouter_pack: batch sizes differ");
  const int r = static_cast<int>(zv.rows());
  const int c = static_cast<int>(xv.rows());
  Mat v(static_cast<Eigen::Index>(r) * c, zv.cols());
  for (Eigen::Index b = 0; b < zv.cols(); ++b) {
    Eigen::Map<Mat> m(v.col(b).data(), r, c);
    m = zv.col(b) * xv.col(b).transpose();
  }
  Node n{std::move(v), z.id, x.id, Op::BOuterPack};
  n.i0 = r;
  n.i1 = c;
  return push(std::move(n));
}

Var Tape::mean_all(Var a) {
  const auto& m = val(a);
  return scale(sum(a), 1.0 / static_cast<double>(m.rows() * m.cols()));
}

Var Tape::col_sums(Var a) {
  Var ones = constant(Mat::Ones(1, val(a).rows()));
  return matmul(ones, a);
}

Var Tape::row_sums(Var a) {
  Var ones = constant(Mat::Ones(val(a).cols(), 1));
  return matmul(a, ones);
}

void Tape::accumulate(std::vector<int>& adj, const std::vector<char>& needs, int target, Var g) {
  if (target < 0 || target >= static_cast<int>(needs.size()) || !needs[target]) return;
  if (adj[target] < 0) {
    adj[target] = g.id;
  } else {
    adj[target] = add(Var{adj[target]}, g).id;
  }
}

std::vector<Var> Tape::gradient(Var out, const std::vector<Var>& wrt) {
  require(out.valid() && out.id < size(), ErrorKind::Dimension, "gradient: invalid output var");
  {
    const Mat& o = val(out);
    require(o.rows() == 1 && o.cols() == 1, ErrorKind::Dimension,
            "gradient: output must be a 1x1 scalar");
  }
  const int n = out.id + 1;

  // A node needs an adjoint only if some wrt leaf sits in its input subgraph;
  // everything else (frozen submodels, data constants) is skipped wholesale.
  std::vector<char> needs(static_cast<size_t>(n), 0);
  for (Var w : wrt) {
    require(w.valid() && w.id < size(), ErrorKind::Dimension, "gradient: invalid wrt var");
    if (w.id < n) needs[static_cast<size_t>(w.id)] = 1;
  }
  for (int i = 0; i < n; ++i) {
    if (needs[static_cast<size_t>(i)]) continue;
    const Node& nd = nodes_[static_cast<size_t>(i)];
    if (nd.op == Op::StopGrad) continue;
    bool na = nd.a >= 0 && needs[static_cast<size_t>(nd.a)];
    bool nb = nd.b >= 0 && needs[static_cast<size_t>(nd.b)];
    if (na || nb) needs[static_cast<size_t>(i)] = 1;
  }

  std::vector<int> adj(static_cast<size_t>(n), -1);
  if (needs[static_cast<size_t>(out.id)])
    adj[static_cast<size_t>(out.id)] = constant(Mat::Ones(1, 1)).id;

  for (int i = out.id; i >= 0; --i) {
    if (adj[static_cast<size_t>(i)] < 0) continue;
    // Copy the scalar fields first; nodes_ may reallocate while we append
    // adjoint arithmetic below.
    const Op op = nodes_[static_cast<size_t>(i)].op;
    const int pa = nodes_[static_cast<size_t>(i)].a;
    const int pb = nodes_[static_cast<size_t>(i)].b;
    const double c0 = nodes_[static_cast<size_t>(i)].c0;
    const double c1 = nodes_[static_cast<size_t>(i)].c1;
    const int i0 = nodes_[static_cast<size_t>(i)].i0;
    const int i1 = nodes_[static_cast<size_t>(i)].i1;
    Var u{adj[static_cast<size_t>(i)]};
    Var self{i};
    Var a{pa};
    Var b{pb};

    switch (op) {
      case Op::Leaf:
      case Op::Const:
      case Op::StopGrad:
        break;
      case Op::Add:
        accumulate(adj, needs, pa, u);
        accumulate(adj, needs, pb, u);
        break;
      case Op::Sub:
        accumulate(adj, needs, pa, u);
        accumulate(adj, needs, pb, neg(u));
        break;
      case Op::Neg:
        accumulate(adj, needs, pa, neg(u));
        break;
      case Op::MatMul:
        accumulate(adj, needs, pa, matmul(u, transpose(b)));
        accumulate(adj, needs, pb, matmul(transpose(a), u));
        break;
      case Op::Transpose:
        accumulate(adj, needs, pa, transpose(u));
        break;
      case Op::Hadamard:
        accumulate(adj, needs, pa, hadamard(u, b));
        accumulate(adj, needs, pb, hadamard(u, a));
        break;
      case Op::ScaleC:
        accumulate(adj, needs, pa, scale(u, c0));
        break;
      case Op::MulScalar:
        accumulate(adj, needs, pa, mul_scalar(u, b));
        accumulate(adj, needs, pb, dot(u, a));
        break;
      case Op::AddColVec:
        accumulate(adj, needs, pa, u);
        accumulate(adj, needs, pb, row_sums(u));
        break;
      case Op::MulColVec:
        accumulate(adj, needs, pa, mul_colvec(u, b));
        accumulate(adj, needs, pb, row_sums(hadamard(u, a)));
        break;
      case Op::Tanh: {
        Var ones = constant(Mat::Ones(val(self).rows(), val(self).cols()));
        accumulate(adj, needs, pa, hadamard(u, sub(ones, square(self))));
        break;
      }
      case Op::Sigmoid: {
        Var ones = constant(Mat::Ones(val(self).rows(), val(self).cols()));
        accumulate(adj, needs, pa, hadamard(u, hadamard(self, sub(ones, self))));
        break;
      }
      case Op::Softplus:
        accumulate(adj, needs, pa, hadamard(u, sigmoid(a)));
        break;
      case Op::Exp:
        accumulate(adj, needs, pa, hadamard(u, self));
        break;
      case Op::Sin:
        accumulate(adj, needs, pa, hadamard(u, cos(a)));
        break;
      case Op::Cos:
        accumulate(adj, needs, pa, neg(hadamard(u, sin(a))));
        break;
      case Op::Sum: {
        Var ones = constant(Mat::Ones(val(a).rows(), val(a).cols()));
        accumulate(adj, needs, pa, mul_scalar(ones, u));
        break;
      }
      case Op::Rows:
        accumulate(adj, needs, pa, pad_rows(u, i0, i1));
        break;
      case Op::PadRows:
        accumulate(adj, needs, pa, rows(u, i0, i1));
        break;
      case Op::Cols:
        accumulate(adj, needs, pa, pad_cols(u, i0, i1));
        break;
      case Op::PadCols:
        accumulate(adj, needs, pa, cols(u, i0, i1));
        break;
      case Op::ConcatRows: {
        const int ra = static_cast<int>(val(a).rows());
        const int rb = static_cast<int>(val(b).rows());
        accumulate(adj, needs, pa, rows(u, 0, ra));
        accumulate(adj, needs, pb, rows(u, ra, rb));
        break;
      }
      case Op::ConcatCols: {
        const int ca = static_cast<int>(val(a).cols());
        const int cb = static_cast<int>(val(b).cols());
        accumulate(adj, needs, pa, cols(u, 0, ca));
        accumulate(adj, needs, pb, cols(u, ca, cb));
        break;
      }
      case Op::Clamp: {
        Mat mask = ((val(a).array() > c0) && (val(a).array() < c1)).cast<double>();
        accumulate(adj, needs, pa, hadamard(u, constant(mask)));
        break;
      }
      case Op::BMatVec:
        accumulate(adj, needs, pa, bouter_pack(u, b));
        accumulate(adj, needs, pb, bmat_tvec(a, u, i0, i1));
        break;
      case Op::BMatTVec:
        accumulate(adj, needs, pa, bouter_pack(b, u));
        accumulate(adj, needs, pb, bmat_vec(a, u, i0, i1));
        break;
      case Op::BOuterPack:
        accumulate(adj, needs, pa, bmat_vec(u, b, i0, i1));
        accumulate(adj, needs, pb, bmat_tvec(u, a, i0, i1));
        break;
    }
  }

  std::vector<Var> out_grads;
  out_grads.reserve(wrt.size());
  for (Var w : wrt) {
    int g = (w.id < n) ? adj[static_cast<size_t>(w.id)] : -1;
    if (g >= 0) {
      out_grads.push_back(Var{g});
    } else {
      const Mat& wv = val(w);
      out_grads.push_back(constant(Mat::Zero(wv.rows(), wv.cols())));
    }
  }
  return out_grads;
}

#undef PHWM_CHECK_SAME

}  // namespace phwm::ad
