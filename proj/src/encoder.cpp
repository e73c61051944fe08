#include "multitox/encoder.hpp"

#include <cmath>

#include "multitox/errors.hpp"

namespace multitox {

void EncoderConfig::validate() const {
  if (n_layers < 0) throw ConfigError("encoder: n_layers must be >= 0");
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
    throw ConfigError("encoder: d_model must be a positive multiple of n_heads");
  }
  if (d_ff <= 0) throw ConfigError("encoder: d_ff must be > 0");
  if (max_len < 2) throw ConfigError("encoder: max_len must be >= 2");
  if (vocab_size <= 0) throw ConfigError("encoder: vocab_size must be > 0");
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("encoder: dropout_p must be in [0, 1)");
  }
  if (n_segments < 1) throw ConfigError("encoder: n_segments must be >= 1");
}

EncoderConfig EncoderConfig::paper_preset(int vocab_size) {
  EncoderConfig c;
  c.n_layers = 24;
  c.d_model = 1024;
  c.n_heads = 16;
  c.d_ff = 4096;
  c.max_len = 64;
  c.vocab_size = vocab_size;
  c.dropout_p = 0.1;
  return c;
}

EncoderConfig EncoderConfig::desk_preset(int vocab_size) {
  EncoderConfig c;
  c.n_layers = 2;
  c.d_model = 32;
  c.n_heads = 4;
  c.d_ff = 64;
  c.max_len = 16;
  c.vocab_size = vocab_size;
  c.dropout_p = 0.1;
  return c;
}

std::size_t EncoderConfig::parameter_count() const {
  const std::size_t d = static_cast<std::size_t>(d_model);
  const std::size_t ff = static_cast<std::size_t>(d_ff);
  std::size_t tables = static_cast<std::size_t>(vocab_size) * d +
                       static_cast<std::size_t>(max_len) * d +
                       static_cast<std::size_t>(n_segments) * d + 2 * d;
  std::size_t per_layer = 4 * d * d + 2 * d * ff + ff + 5 * d;
  return tables + static_cast<std::size_t>(n_layers) * per_layer;
}

namespace {

Tensor trunc_normal(std::vector<std::size_t> shape, Rng& rng) {
  return random_trunc_normal(std::move(shape), rng, 0.02);
}

}  // namespace

EncoderState::EncoderState(const EncoderConfig& cfg, Rng& init_rng)
    : config(cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  token_table = trunc_normal({static_cast<std::size_t>(cfg.vocab_size), d},
                             init_rng);
  pos_table = trunc_normal({static_cast<std::size_t>(cfg.max_len), d},
                           init_rng);
  seg_table = trunc_normal({static_cast<std::size_t>(cfg.n_segments), d},
                           init_rng);
  embed_ln_gain = Tensor::full({d}, 1.0);
  embed_ln_bias = Tensor::zeros({d});
  for (int l = 0; l < cfg.n_layers; ++l) {
    EncoderLayerWeights w;
    w.w_q = trunc_normal({d, d}, init_rng);
    w.w_k = trunc_normal({d, d}, init_rng);
    w.w_v = trunc_normal({d, d}, init_rng);
    w.w_o = trunc_normal({d, d}, init_rng);
    w.w1 = trunc_normal({d, ff}, init_rng);
    w.b1 = Tensor::zeros({ff});
    w.w2 = trunc_normal({ff, d}, init_rng);
    w.b2 = Tensor::zeros({d});
    w.ln1_gain = Tensor::full({d}, 1.0);
    w.ln1_bias = Tensor::zeros({d});
    w.ln2_gain = Tensor::full({d}, 1.0);
    w.ln2_bias = Tensor::zeros({d});
    layers.push_back(std::move(w));
  }
}

void EncoderState::register_params(ParamRegistry& reg) const {
  reg.add("encoder.token_table", token_table, true);
  reg.add("encoder.pos_table", pos_table, true);
  reg.add("encoder.seg_table", seg_table, true);
  reg.add("encoder.embed_ln_gain", embed_ln_gain, false);
  reg.add("encoder.embed_ln_bias", embed_ln_bias, false);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    const EncoderLayerWeights& w = layers[l];
    reg.add(p + "w_q", w.w_q, true);
    reg.add(p + "w_k", w.w_k, true);
    reg.add(p + "w_v", w.w_v, true);
    reg.add(p + "w_o", w.w_o, true);
    reg.add(p + "w1", w.w1, true);
    reg.add(p + "b1", w.b1, false);
    reg.add(p + "w2", w.w2, true);
    reg.add(p + "b2", w.b2, false);
    reg.add(p + "ln1_gain", w.ln1_gain, false);
    reg.add(p + "ln1_bias", w.ln1_bias, false);
    reg.add(p + "ln2_gain", w.ln2_gain, false);
    reg.add(p + "ln2_bias", w.ln2_bias, false);
  }
}

Tensor mask_tensor(const TokenizedSequence& seq) {
  std::vector<double> vals(seq.mask.begin(), seq.mask.end());
  const std::size_t n = vals.size();
  return Tensor::from_values({n}, std::move(vals));
}

Tensor embed(const TokenizedSequence& seq, const EncoderState& state,
             bool training, Rng& rng) {
  const EncoderConfig& cfg = state.config;
  if (static_cast<int>(seq.ids.size()) != cfg.max_len) {
    throw ShapeError("embed: sequence length " +
                     std::to_string(seq.ids.size()) + " != max_len " +
                     std::to_string(cfg.max_len));
  }
  std::vector<int> positions(seq.ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = static_cast<int>(i);
  }
  // Single-sentence input: every token sits in segment 0.
  std::vector<int> segments(seq.ids.size(), 0);
  Tensor sum = add(add(embedding_lookup(state.token_table, seq.ids),
                       embedding_lookup(state.pos_table, positions)),
                   embedding_lookup(state.seg_table, segments));
  Tensor normed =
      layer_norm(sum, state.embed_ln_gain, state.embed_ln_bias);
  return dropout(normed, cfg.dropout_p, training, rng);
}

Tensor encoder_layer(const Tensor& h, const Tensor& mask,
                     const EncoderLayerWeights& w, const EncoderConfig& cfg,
                     bool training, Rng& rng, std::vector<Tensor>* attn_out) {
  const std::size_t L = h.rows();
  if (mask.numel() != L) {
    throw ShapeError("encoder_layer: mask length " +
                     std::to_string(mask.numel()) + " != sequence length " +
                     std::to_string(L));
  }
  const auto dk = static_cast<std::size_t>(cfg.head_dim());
  Tensor q = matmul(h, w.w_q);
  Tensor k = matmul(h, w.w_k);
  Tensor v = matmul(h, w.w_v);
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(cfg.n_heads));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int head = 0; head < cfg.n_heads; ++head) {
    const std::size_t off = static_cast<std::size_t>(head) * dk;
    Tensor qh = slice_lastdim(q, off, dk);
    Tensor kh = slice_lastdim(k, off, dk);
    Tensor vh = slice_lastdim(v, off, dk);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt_dk);
    Tensor weights = softmax_lastdim(scores, &mask);
    if (attn_out) attn_out->push_back(weights);
    heads.push_back(matmul(weights, vh));
  }
  Tensor multihead = matmul(concat_lastdim(heads), w.w_o);
  Tensor h1 = layer_norm(add(h, dropout(multihead, cfg.dropout_p, training, rng)),
                         w.ln1_gain, w.ln1_bias);
  Tensor ffn = add_rowvec(
      matmul(gelu(add_rowvec(matmul(h1, w.w1), w.b1)), w.w2), w.b2);
  return layer_norm(add(h1, dropout(ffn, cfg.dropout_p, training, rng)),
                    w.ln2_gain, w.ln2_bias);
}

Tensor encode_sequence(const TokenizedSequence& seq, const EncoderState& state,
                       bool training, Rng& rng) {
  Tensor mask = mask_tensor(seq);
  Tensor h = embed(seq, state, training, rng);
  for (const EncoderLayerWeights& w : state.layers) {
    h = encoder_layer(h, mask, w, state.config, training, rng);
  }
  return h;
}

}  // namespace multitox
