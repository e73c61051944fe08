#ifndef MULTITOX_ENCODER_HPP
#define MULTITOX_ENCODER_HPP

#include <string>
#include <vector>

#include "multitox/params.hpp"
#include "multitox/tensor.hpp"
#include "multitox/text_pipeline.hpp"

namespace multitox {

struct EncoderConfig {
  int n_layers = 2;
  int d_model = 32;
  int n_heads = 4;
  int d_ff = 64;
  int max_len = 16;
  int vocab_size = 0;
  double dropout_p = 0.1;
  int n_segments = 1;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }

  // 24 layers, d 1024, 16 heads, d_ff 4096, max_len 64 — the reference
  // scale; far beyond what this artifact trains, kept as a named preset.
  static EncoderConfig paper_preset(int vocab_size);
  // Small configuration suitable for CPU experiments and tests.
  static EncoderConfig desk_preset(int vocab_size);

  // Closed-form trainable parameter count:
  //   V*d + L*d + n_seg*d + 2d  (tables + embedding LayerNorm)
  //   + n_layers * (4d^2 + 2*d*d_ff + d_ff + 5d)
  std::size_t parameter_count() const;
};

struct EncoderLayerWeights {
  Tensor w_q, w_k, w_v, w_o;              // [d x d]
  Tensor w1, b1;                          // [d x d_ff], [d_ff]
  Tensor w2, b2;                          // [d_ff x d], [d]
  Tensor ln1_gain, ln1_bias;              // [d]
  Tensor ln2_gain, ln2_bias;              // [d]
};

struct EncoderState {
  EncoderConfig config;
  Tensor token_table;                     // [V x d]
  Tensor pos_table;                       // [L x d]
  Tensor seg_table;                       // [n_segments x d]
  Tensor embed_ln_gain, embed_ln_bias;    // [d]
  std::vector<EncoderLayerWeights> layers;

  EncoderState() = default;
  // Truncated normal (std 0.02) matrices, zero biases, unit LayerNorm gains.
  EncoderState(const EncoderConfig& cfg, Rng& init_rng);

  void register_params(ParamRegistry& reg) const;
};

Tensor mask_tensor(const TokenizedSequence& seq);

// Token + positional + segment embedding, LayerNorm, dropout.
Tensor embed(const TokenizedSequence& seq, const EncoderState& state,
             bool training, Rng& rng);

// One masked MHSA + FFN block with Add&Norm around each sublayer.  When
// attn_out is given it receives the per-head attention weight matrices.
Tensor encoder_layer(const Tensor& h, const Tensor& mask,
                     const EncoderLayerWeights& w, const EncoderConfig& cfg,
                     bool training, Rng& rng,
                     std::vector<Tensor>* attn_out = nullptr);

// embed + all layers; returns the token-level representation matrix [L x d].
Tensor encode_sequence(const TokenizedSequence& seq, const EncoderState& state,
                       bool training, Rng& rng);

}  // namespace multitox

#endif
