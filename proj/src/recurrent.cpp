#include "multitox/recurrent.hpp"

#include <cmath>

#include "multitox/errors.hpp"

namespace multitox {

void LstmConfig::validate() const {
  if (input_dim < 1) throw ConfigError("lstm: input_dim must be >= 1");
  if (hidden_dim < 1) throw ConfigError("lstm: hidden_dim must be >= 1");
  if (n_layers < 1) throw ConfigError("lstm: n_layers must be >= 1");
  if (interlayer_dropout_p < 0.0 || interlayer_dropout_p >= 1.0) {
    throw ConfigError("lstm: dropout must be in [0, 1)");
  }
}

int LstmConfig::layer_input_dim(int layer) const {
  return layer == 0 ? input_dim : hidden_dim;
}

std::size_t LstmConfig::parameter_count() const {
  std::size_t total = 0;
  for (int l = 0; l < n_layers; ++l) {
    const auto in = static_cast<std::size_t>(hidden_dim + layer_input_dim(l));
    total += 4 * (in * static_cast<std::size_t>(hidden_dim) +
                  static_cast<std::size_t>(hidden_dim));
  }
  return total;
}

LstmState::LstmState(const LstmConfig& cfg, Rng& init_rng) : config(cfg) {
  cfg.validate();
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  const auto hid = static_cast<std::size_t>(cfg.hidden_dim);
  auto uniform = [&](std::size_t rows, std::size_t cols) {
    return random_uniform({rows, cols}, init_rng, -bound, bound);
  };
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto in = static_cast<std::size_t>(hid) +
                    static_cast<std::size_t>(cfg.layer_input_dim(l));
    LstmLayerWeights w;
    w.w_f = uniform(in, hid);
    w.w_i = uniform(in, hid);
    w.w_c = uniform(in, hid);
    w.w_o = uniform(in, hid);
    w.b_f = Tensor::full({hid}, 1.0);  // forget-bias convention
    w.b_i = Tensor::zeros({hid});
    w.b_c = Tensor::zeros({hid});
    w.b_o = Tensor::zeros({hid});
    layers.push_back(std::move(w));
  }
}

void LstmState::register_params(ParamRegistry& reg) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "lstm.layer" + std::to_string(l) + ".";
    const LstmLayerWeights& w = layers[l];
    reg.add(p + "w_f", w.w_f, true);
    reg.add(p + "w_i", w.w_i, true);
    reg.add(p + "w_c", w.w_c, true);
    reg.add(p + "w_o", w.w_o, true);
    reg.add(p + "b_f", w.b_f, false);
    reg.add(p + "b_i", w.b_i, false);
    reg.add(p + "b_c", w.b_c, false);
    reg.add(p + "b_o", w.b_o, false);
  }
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev,
                                    const LstmLayerWeights& w) {
  Tensor z = concat_lastdim({h_prev, x_t});
  Tensor f = sigmoid(add_rowvec(matmul(z, w.w_f), w.b_f));
  Tensor i = sigmoid(add_rowvec(matmul(z, w.w_i), w.b_i));
  Tensor c_tilde = tanh(add_rowvec(matmul(z, w.w_c), w.b_c));
  Tensor c_t = add(mul(f, c_prev), mul(i, c_tilde));
  Tensor o = sigmoid(add_rowvec(matmul(z, w.w_o), w.b_o));
  Tensor h_t = mul(o, tanh(c_t));
  return {h_t, c_t};
}

Tensor run_stacked(const Tensor& inputs, const std::vector<int>& mask,
                   const LstmState& state, bool training, Rng& rng) {
  const LstmConfig& cfg = state.config;
  const std::size_t L = inputs.rows();
  if (L == 0) throw ShapeError("run_stacked: empty sequence");
  if (inputs.cols() != static_cast<std::size_t>(cfg.input_dim)) {
    throw ShapeError("run_stacked: input width " +
                     std::to_string(inputs.cols()) + " != input_dim " +
                     std::to_string(cfg.input_dim));
  }
  if (!mask.empty() && mask.size() != L) {
    throw ShapeError("run_stacked: mask length mismatch");
  }
  const auto hid = static_cast<std::size_t>(cfg.hidden_dim);

  std::size_t last_step = L - 1;
  if (cfg.mask_aware) {
    if (mask.empty()) {
      throw ConfigError("run_stacked: mask-aware mode needs a mask");
    }
    bool found = false;
    for (std::size_t t = L; t-- > 0;) {
      if (mask[t]) {
        last_step = t;
        found = true;
        break;
      }
    }
    if (!found) throw ShapeError("run_stacked: all positions masked");
  }

  std::vector<Tensor> layer_in;
  layer_in.reserve(L);
  for (std::size_t t = 0; t < L; ++t) layer_in.push_back(take_row(inputs, t));

  Tensor h_final;
  for (int l = 0; l < cfg.n_layers; ++l) {
    Tensor h = Tensor::zeros({1, hid});
    Tensor c = Tensor::zeros({1, hid});
    std::vector<Tensor> h_seq;
    h_seq.reserve(L);
    for (std::size_t t = 0; t < L; ++t) {
      auto [h_t, c_t] = lstm_cell(layer_in[t], h, c, state.layers[l]);
      h = h_t;
      c = c_t;
      h_seq.push_back(h_t);
      if (t == last_step) h_final = h_t;
    }
    if (l + 1 < cfg.n_layers) {
      for (std::size_t t = 0; t < L; ++t) {
        layer_in[t] =
            dropout(h_seq[t], cfg.interlayer_dropout_p, training, rng);
      }
    }
  }
  return h_final;
}

}  // namespace multitox
