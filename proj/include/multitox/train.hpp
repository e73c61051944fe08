#ifndef MULTITOX_TRAIN_HPP
#define MULTITOX_TRAIN_HPP

#include <string>
#include <vector>

#include "multitox/model.hpp"
#include "multitox/optim.hpp"

namespace multitox {

struct TrainOptions {
  int epochs = 0;
  int batch_size = 32;
  AdamWConfig adamw;           // adamw.lr is the schedule's base rate
  double warmup_ratio = 0.1;
  double clip_norm = 1.0;
  double threshold = 0.5;
  int freeze_bottom_k = 0;
  std::uint64_t seed = 0;      // shuffle/dropout sub-streams derive from this

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;  // labelwise at the configured threshold
};

struct TrainResult {
  std::vector<EpochStats> curve;
  int best_epoch = -1;  // -1 when there is no validation split
  double best_val_loss = 0.0;
  // Parameter snapshot (registry order) at the best validation epoch.
  std::vector<std::vector<double>> best_values;
};

// Runs the full loop: minibatch, forward, BCE, backward, clip, AdamW step,
// scheduler step, grad reset.  The model is left at its final-epoch state;
// the best-validation weights are returned in the result.  Throws on a
// non-finite loss with diagnostics in the message.
TrainResult train_model(HybridModel& model,
                        const std::vector<TokenizedSequence>& train_seqs,
                        const std::vector<LabeledExample>& train_labels,
                        const std::vector<TokenizedSequence>& val_seqs,
                        const std::vector<LabeledExample>& val_labels,
                        const TrainOptions& opts);

void restore_snapshot(HybridModel& model,
                      const std::vector<std::vector<double>>& values);
std::vector<std::vector<double>> snapshot_params(const HybridModel& model);

// Eval-mode BCE over the whole set, batched.
double evaluate_loss(const HybridModel& model,
                     const std::vector<TokenizedSequence>& seqs,
                     const std::vector<LabeledExample>& labels);

// Full metrics from eval-mode predictions plus sigmoid scores.
MetricsReport evaluate_model(const HybridModel& model,
                             const std::vector<TokenizedSequence>& seqs,
                             const std::vector<LabeledExample>& labels,
                             double threshold = 0.5);

RocResult evaluate_roc(const HybridModel& model,
                       const std::vector<TokenizedSequence>& seqs,
                       const std::vector<LabeledExample>& labels);

// epoch,train_loss,val_loss,val_acc per row.
void write_curve_file(const std::string& path,
                      const std::vector<EpochStats>& curve);

}  // namespace multitox

#endif
