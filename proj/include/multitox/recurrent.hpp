#ifndef MULTITOX_RECURRENT_HPP
#define MULTITOX_RECURRENT_HPP

#include <utility>
#include <vector>

#include "multitox/params.hpp"
#include "multitox/tensor.hpp"

namespace multitox {

struct LstmConfig {
  int input_dim = 32;
  int hidden_dim = 16;  // reference scale uses 256
  int n_layers = 2;
  double interlayer_dropout_p = 0.3;
  // Faithful mode (default) runs t over the full padded length.  Mask-aware
  // mode instead takes the hidden state at the last unmasked step, which
  // avoids diluting h_final with padded-tail steps.
  bool mask_aware = false;

  void validate() const;
  int layer_input_dim(int layer) const;  // input_dim + hidden, then 2*hidden
  std::size_t parameter_count() const;
};

struct LstmLayerWeights {
  // Gate matrices act on the concatenation [h_prev, x_t].
  Tensor w_f, w_i, w_c, w_o;  // [(hidden+in) x hidden]
  Tensor b_f, b_i, b_c, b_o;  // [hidden]
};

struct LstmState {
  LstmConfig config;
  std::vector<LstmLayerWeights> layers;

  LstmState() = default;
  // Uniform +-1/sqrt(hidden) weights; forget bias +1, other biases 0.
  LstmState(const LstmConfig& cfg, Rng& init_rng);

  void register_params(ParamRegistry& reg) const;
};

// One gate update.  x_t is [1 x in], h_prev and c_prev are [1 x hidden];
// returns (h_t, c_t).
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev,
                                    const LstmLayerWeights& w);

// Runs the stacked layers over the rows of inputs [L x input_dim] and
// returns the top layer's final hidden state [1 x hidden].  Inter-layer
// dropout applies to the sequence handed upward, not to the recurrence, and
// never after the top layer.
Tensor run_stacked(const Tensor& inputs, const std::vector<int>& mask,
                   const LstmState& state, bool training, Rng& rng);

}  // namespace multitox

#endif
