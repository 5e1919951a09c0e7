#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "core/error.hpp"

namespace phwm::ad {

using Mat = Eigen::MatrixXd;

enum class Op : uint8_t {
  Leaf,       // differentiable input (parameter block or probe point)
  Const,      // data; never receives an adjoint
  StopGrad,   // identity value, blocks the reverse sweep
  Add,
  Sub,
  Neg,
  MatMul,
  Transpose,
  Hadamard,
  ScaleC,     // multiply by a compile-time double (c0)
  MulScalar,  // broadcast-multiply by a 1x1 variable
  AddColVec,  // add an (m x 1) variable to every column
  MulColVec,  // multiply every column elementwise by an (m x 1) variable
  Tanh,
  Sigmoid,
  Softplus,
  Exp,
  Sin,
  Cos,
  Sum,        // sum of all entries -> 1x1
  Rows,       // row slice [i0, i0+i1)
  PadRows,    // inverse of Rows: place into rows [i0, ..) of an i1-row zero matrix
  Cols,
  PadCols,
  ConcatRows,
  ConcatCols,
  Clamp,      // clamp entries to [c0, c1]; gradient is the open-interval mask
  BMatVec,    // column b of output = unpack(A.col(b), i0 x i1) * x.col(b)
  BMatTVec,   // column b of output = unpack(A.col(b), i0 x i1)^T * z.col(b)
  BOuterPack, // column b of output = vec(z.col(b) * x.col(b)^T), column-major
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Append-only tape of matrix operations with eager evaluation. The reverse sweep
// (gradient) emits its adjoint arithmetic as ordinary tape nodes, so gradients can
// be differentiated again; that re-entrancy is what the Hessian-vector products
// and the curvature penalties downstream rely on.
class Tape {
public:
  Var leaf(const Mat& value);
  Var constant(const Mat& value);
  Var constant(double value);  // 1x1

  const Mat& val(Var v) const;  // invalidated by the next append; copy if kept
  double scalar(Var v) const;   // value of a 1x1 var
  int size() const { return static_cast<int>(nodes_.size()); }
  void reset();                 // drop all nodes, keep buffers

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double c);
  Var mul_scalar(Var a, Var s);
  Var add_colvec(Var a, Var v);
  Var mul_colvec(Var a, Var v);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var exp(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var sum(Var a);
  Var rows(Var a, int start, int count);
  Var pad_rows(Var a, int start, int total_rows);
  Var cols(Var a, int start, int count);
  Var pad_cols(Var a, int start, int total_cols);
  Var concat_rows(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var clamp(Var a, double lo, double hi);
  Var stop_gradient(Var a);
  Var bmat_vec(Var packed, Var x, int r, int c);
  Var bmat_tvec(Var packed, Var z, int r, int c);
  Var bouter_pack(Var z, Var x);

  // Composites.
  Var square(Var a) { return hadamard(a, a); }
  Var dot(Var a, Var b) { return sum(hadamard(a, b)); }
  Var mean_all(Var a);
  Var col_sums(Var a);   // 1 x C row of column sums
  Var row_sums(Var a);   // R x 1 column of row sums

  // d(out)/d(wrt[i]) for a scalar out. Entries with no path from wrt to out come
  // back as constant zeros of the wrt shape, so callers can use results blindly.
  // The sweep appends new nodes; calling gradient on its outputs is legal and is
  // how higher derivatives are taken.
  std::vector<Var> gradient(Var out, const std::vector<Var>& wrt);
  Var grad_one(Var out, Var wrt) { return gradient(out, {wrt})[0]; }

private:
  struct Node {
    Mat val;
    int a = -1, b = -1;
    Op op = Op::Const;
    double c0 = 0.0, c1 = 0.0;
    int i0 = 0, i1 = 0;
  };

  Var push(Node&& n);
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  void accumulate(std::vector<int>& adj, const std::vector<char>& needs, int target, Var g);

  std::vector<Node> nodes_;
};

}  // namespace phwm::ad
