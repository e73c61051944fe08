#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "multitox/encoder.hpp"
#include "multitox/errors.hpp"
#include "support/gradcheck.hpp"

using namespace multitox;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 12;
  cfg.max_len = 4;
  cfg.vocab_size = 11;
  cfg.dropout_p = 0.1;
  return cfg;
}

TokenizedSequence make_seq(std::vector<int> ids) {
  TokenizedSequence seq;
  seq.ids = std::move(ids);
  seq.mask.resize(seq.ids.size());
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    seq.mask[i] = seq.ids[i] != 0 ? 1 : 0;
  }
  seq.original_token_count = 0;
  for (int m : seq.mask) seq.original_token_count += m;
  return seq;
}

void zero_tables(EncoderState& state) {
  for (Tensor* t : {&state.token_table, &state.pos_table, &state.seg_table}) {
    std::fill(t->values().begin(), t->values().end(), 0.0);
  }
}

}  // namespace

TEST_CASE("config validation and presets") {
  EncoderConfig cfg = tiny_config();
  cfg.validate();
  cfg.d_model = 9;  // not divisible by 2 heads
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  EncoderConfig paper = EncoderConfig::paper_preset(30000);
  CHECK(paper.n_layers == 24);
  CHECK(paper.d_model == 1024);
  CHECK(paper.n_heads == 16);
  CHECK(paper.d_ff == 4096);
  CHECK(paper.max_len == 64);
  CHECK(paper.head_dim() == 64);

  EncoderConfig desk = EncoderConfig::desk_preset(100);
  desk.validate();
  CHECK(desk.d_model == 32);
}

TEST_CASE("parameter count matches the closed-form formula exactly") {
  EncoderConfig cfg = tiny_config();
  Rng rng(1);
  EncoderState state(cfg, rng);
  ParamRegistry reg;
  state.register_params(reg);
  CHECK(reg.total_parameters() == cfg.parameter_count());

  EncoderConfig desk = EncoderConfig::desk_preset(60);
  Rng rng2(2);
  EncoderState desk_state(desk, rng2);
  ParamRegistry reg2;
  desk_state.register_params(reg2);
  CHECK(reg2.total_parameters() == desk.parameter_count());
}

TEST_CASE("embed with zeroed tables is all zero via the LayerNorm zero case") {
  EncoderConfig cfg = tiny_config();
  Rng rng(3);
  EncoderState state(cfg, rng);
  zero_tables(state);
  TokenizedSequence seq = make_seq({2, 5, 7, 0});
  Rng fwd(9);
  Tensor out = embed(seq, state, false, fwd);
  REQUIRE(out.shape() == std::vector<std::size_t>{4, 8});
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("embed is deterministic in eval mode and uses positions") {
  EncoderConfig cfg = tiny_config();
  Rng rng(4);
  EncoderState state(cfg, rng);
  TokenizedSequence seq = make_seq({2, 2, 5, 0});  // same token twice
  Rng f1(1), f2(2);
  Tensor a = embed(seq, state, false, f1);
  Tensor b = embed(seq, state, false, f2);
  CHECK(a.values() == b.values());

  // Same token id at two positions differs because of the positional rows.
  bool differ = false;
  for (std::size_t j = 0; j < 8; ++j) {
    if (a.at(0, j) != a.at(1, j)) differ = true;
  }
  CHECK(differ);

  TokenizedSequence wrong = make_seq({1, 2, 3});
  Rng f3(3);
  CHECK_THROWS_AS(embed(wrong, state, false, f3), ShapeError);
}

TEST_CASE("attention puts exactly zero weight on padded keys") {
  EncoderConfig cfg = tiny_config();
  Rng rng(5);
  EncoderState state(cfg, rng);
  TokenizedSequence seq = make_seq({3, 4, 0, 0});
  Tensor mask = mask_tensor(seq);
  Rng fwd(11);
  Tensor h = embed(seq, state, false, fwd);
  std::vector<Tensor> attn;
  encoder_layer(h, mask, state.layers[0], cfg, false, fwd, &attn);
  REQUIRE(attn.size() == 2);  // one weight matrix per head
  for (const Tensor& w : attn) {
    for (std::size_t q = 0; q < 4; ++q) {
      CHECK(w.at(q, 2) == 0.0);
      CHECK(w.at(q, 3) == 0.0);
      double row = 0.0;
      for (std::size_t k = 0; k < 4; ++k) row += w.at(q, k);
      CHECK(std::fabs(row - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("single unmasked token attends only to itself") {
  EncoderConfig cfg = tiny_config();
  cfg.n_heads = 1;
  Rng rng(6);
  EncoderState state(cfg, rng);
  TokenizedSequence seq = make_seq({7, 0, 0, 0});
  Rng fwd(13);
  Tensor h = embed(seq, state, false, fwd);
  std::vector<Tensor> attn;
  encoder_layer(h, mask_tensor(seq), state.layers[0], cfg, false, fwd, &attn);
  CHECK(attn[0].at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t k = 1; k < 4; ++k) CHECK(attn[0].at(0, k) == 0.0);
}

TEST_CASE("layer output rows are LayerNorm-centered") {
  EncoderConfig cfg = tiny_config();
  Rng rng(7);
  EncoderState state(cfg, rng);
  TokenizedSequence seq = make_seq({1, 2, 3, 4});
  Rng fwd(17);
  Tensor h = embed(seq, state, false, fwd);
  Tensor out =
      encoder_layer(h, mask_tensor(seq), state.layers[0], cfg, false, fwd);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += out.at(r, j);
    mean /= 8.0;
    CHECK(std::fabs(mean) < 1e-6);
  }
}

TEST_CASE("encode_sequence with zero layers returns the embedding") {
  EncoderConfig cfg = tiny_config();
  cfg.n_layers = 0;
  Rng rng(8);
  EncoderState state(cfg, rng);
  TokenizedSequence seq = make_seq({1, 2, 0, 0});
  Rng f1(21), f2(21);
  Tensor enc = encode_sequence(seq, state, false, f1);
  Tensor emb = embed(seq, state, false, f2);
  CHECK(enc.values() == emb.values());
}

TEST_CASE("encode_sequence is reproducible under a fixed seed in training") {
  EncoderConfig cfg = tiny_config();
  Rng rng(9);
  EncoderState state(cfg, rng);
  TokenizedSequence seq = make_seq({1, 2, 3, 0});
  Rng f1(42), f2(42), f3(43);
  Tensor a = encode_sequence(seq, state, true, f1);
  Tensor b = encode_sequence(seq, state, true, f2);
  Tensor c = encode_sequence(seq, state, true, f3);
  CHECK(a.values() == b.values());
  CHECK(a.values() != c.values());
}

TEST_CASE("perturbing a padded token id leaves unmasked outputs unchanged") {
  EncoderConfig cfg = tiny_config();
  cfg.n_layers = 1;
  Rng rng(10);
  EncoderState state(cfg, rng);
  TokenizedSequence seq = make_seq({3, 6, 9, 0});
  TokenizedSequence mutated = seq;
  mutated.ids[3] = 8;          // different id at the padded slot
  mutated.mask[3] = 0;         // still padding
  Rng f1(5), f2(5);
  Tensor a = encode_sequence(seq, state, false, f1);
  Tensor b = encode_sequence(mutated, state, false, f2);
  for (std::size_t r = 0; r < 3; ++r) {  // unmasked rows only
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(std::fabs(a.at(r, j) - b.at(r, j)) <= 1e-9);
    }
  }
}

TEST_CASE("full encoder layer gradient vs finite differences") {
  EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 6;
  cfg.n_heads = 2;
  cfg.d_ff = 8;
  cfg.max_len = 3;
  cfg.vocab_size = 5;
  cfg.dropout_p = 0.0;
  Rng rng(11);
  EncoderState state(cfg, rng);
  const EncoderLayerWeights& w = state.layers[0];

  Rng data_rng(12);
  std::vector<double> hv(18);
  for (auto& v : hv) v = data_rng.next_normal() * 0.5;
  Tensor h = Tensor::from_values({3, 6}, hv);
  Tensor mask = Tensor::from_values({3}, {1, 1, 1});
  std::vector<double> pv(18);
  for (auto& v : pv) v = data_rng.next_normal();
  Tensor probe = Tensor::from_values({3, 6}, pv);

  Rng fwd(0);
  double err = gradcheck::max_rel_err(
      {h, w.w_q, w.w_k, w.w_v, w.w_o, w.w1, w.b1, w.w2, w.b2, w.ln1_gain,
       w.ln1_bias, w.ln2_gain, w.ln2_bias},
      [&]() {
        Tensor out = encoder_layer(h, mask, w, cfg, false, fwd);
        return sum_all(mul(out, probe));
      });
  CHECK(err < 1e-4);
}

TEST_CASE("masked positions also pass the gradient check") {
  EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 4;
  cfg.n_heads = 1;
  cfg.d_ff = 6;
  cfg.max_len = 3;
  cfg.vocab_size = 5;
  cfg.dropout_p = 0.0;
  Rng rng(13);
  EncoderState state(cfg, rng);
  Rng data_rng(14);
  std::vector<double> hv(12);
  for (auto& v : hv) v = data_rng.next_normal() * 0.5;
  Tensor h = Tensor::from_values({3, 4}, hv);
  Tensor mask = Tensor::from_values({3}, {1, 1, 0});
  std::vector<double> pv(12);
  for (auto& v : pv) v = data_rng.next_normal();
  Tensor probe = Tensor::from_values({3, 4}, pv);
  Rng fwd(0);
  double err = gradcheck::max_rel_err({h, state.layers[0].w_v}, [&]() {
    Tensor out = encoder_layer(h, mask, state.layers[0], cfg, false, fwd);
    return sum_all(mul(out, probe));
  });
  CHECK(err < 1e-4);
}
