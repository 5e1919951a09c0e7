#pragma once
#include <string>
#include <vector>

#include "ad/tape.hpp"
#include "nets/params.hpp"

namespace phwm::nets {

enum class Act { Tanh, Softplus };

// Inputs and outputs are column-batched: one sample per column.
struct MlpSpec {
  int in = 0;
  std::vector<int> hidden;
  int out = 0;
  Act act = Act::Tanh;
  double gain = 1.0;        // scales the uniform init half-width
  bool zero_init = false;   // all-zero weights; used by tests and ablations
};

class Mlp {
public:
  Mlp() = default;
  static Mlp create(ParamStore& store, RngStream& rng, const std::string& prefix,
                    const MlpSpec& spec);

  ad::Var forward(ad::Tape& t, ParamBinding& bind, ad::Var x) const;
  ad::Mat forward_plain(const ParamStore& store, const ad::Mat& x) const;

  const MlpSpec& spec() const { return spec_; }

private:
  MlpSpec spec_;
  std::vector<int> w_ids_, b_ids_;
};

// Gated recurrent cell:
//   u = sigmoid(Wu x + Uu h + bu)        update gate
//   r = sigmoid(Wr x + Ur h + br)        reset gate
//   c = tanh  (Wc x + Uc (r*h) + bc)     candidate
//   h' = (1-u)*h + u*c
class GruCell {
public:
  GruCell() = default;
  static GruCell create(ParamStore& store, RngStream& rng, const std::string& prefix, int in,
                        int state, double gain = 1.0, bool zero_init = false);

  ad::Var forward(ad::Tape& t, ParamBinding& bind, ad::Var x, ad::Var h) const;
  ad::Mat forward_plain(const ParamStore& store, const ad::Mat& x, const ad::Mat& h) const;

  int state_dim() const { return state_; }

private:
  int in_ = 0, state_ = 0;
  int wu_, uu_, bu_, wr_, ur_, br_, wc_, uc_, bc_ = -1;
};

// Small temporal convolution over a fixed window. The window arrives stacked as
// rows: position p occupies rows [p*d_in, (p+1)*d_in). Kernels of width <= 3 with
// valid padding are applied until a single position remains, then a linear head
// maps it to d_out.
struct TcnSpec {
  int d_in = 0;
  int positions = 0;
  int channels = 16;
  int d_out = 0;
  Act act = Act::Tanh;
  double gain = 1.0;
  bool zero_init = false;
};

class Tcn {
public:
  Tcn() = default;
  static Tcn create(ParamStore& store, RngStream& rng, const std::string& prefix,
                    const TcnSpec& spec);

  ad::Var forward(ad::Tape& t, ParamBinding& bind, ad::Var window) const;
  ad::Mat forward_plain(const ParamStore& store, const ad::Mat& window) const;

  const TcnSpec& spec() const { return spec_; }

private:
  struct Layer {
    int width = 0;                 // kernel width (number of taps)
    int in_ch = 0, out_ch = 0;
    int positions_out = 0;
    std::vector<int> k_ids;        // one weight block per tap
    int b_id = -1;
  };
  TcnSpec spec_;
  std::vector<Layer> layers_;
  int head_w_ = -1, head_b_ = -1;
};

ad::Var activate(ad::Tape& t, ad::Var x, Act act);
ad::Mat activate_plain(const ad::Mat& x, Act act);

}  // namespace phwm::nets
