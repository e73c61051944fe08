#ifndef MULTITOX_MODEL_HPP
#define MULTITOX_MODEL_HPP

#include <string>
#include <vector>

#include "multitox/encoder.hpp"
#include "multitox/metrics.hpp"
#include "multitox/recurrent.hpp"
#include "multitox/sampling.hpp"

namespace multitox {

struct ModelConfig {
  EncoderConfig encoder;
  LstmConfig lstm;
  double head_dropout_p = 0.3;
  int n_labels = kNumLabels;

  void validate() const;
  std::size_t parameter_count() const;

  static ModelConfig desk_preset(int vocab_size);
  static ModelConfig paper_preset(int vocab_size);
};

// Encoder -> stacked LSTM -> dropout -> affine head, with a flat parameter
// registry covering every trainable tensor exactly once.
class HybridModel {
 public:
  HybridModel() = default;
  HybridModel(const ModelConfig& cfg, Rng& init_rng);

  const ModelConfig& config() const { return config_; }
  ParamRegistry& params() { return registry_; }
  const ParamRegistry& params() const { return registry_; }

  // Per-example encode -> run_stacked -> dropout -> head; returns [B x K].
  Tensor forward(const std::vector<TokenizedSequence>& batch, bool training,
                 Rng& rng) const;

  // Freezes the embedding tables plus encoder layers [0, k).
  void freeze_bottom_layers(int k);

  EncoderState encoder;
  LstmState lstm;
  Tensor w_clf;  // [K x hidden]
  Tensor b_clf;  // [K]

 private:
  ModelConfig config_;
  ParamRegistry registry_;
};

struct PredictionBatch {
  std::vector<std::vector<double>> logits;
  ScoreMatrix probabilities;  // sigmoid(logits)
  LabelMatrix hard;           // probability >= threshold (inclusive)
  double threshold = 0.5;
};

PredictionBatch predict(const Tensor& logits, double threshold = 0.5);

// Mean over the batch of the per-example sum over labels, computed in the
// stable logit form.
Tensor bce_loss(const Tensor& logits, const Tensor& targets);

Tensor label_tensor(const std::vector<LabeledExample>& batch);

// Binary checkpoint: magic, version, config block, named parameter records.
// Round-trips bit-exactly; the write goes through a temp file + rename.
void save_checkpoint(const HybridModel& model, const std::string& path);
HybridModel load_checkpoint(const std::string& path);

}  // namespace multitox

#endif
