#include "multitox/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "multitox/errors.hpp"
#include "multitox/rng.hpp"

namespace multitox {

void TrainOptions::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (clip_norm <= 0.0) throw ConfigError("train: clip_norm must be > 0");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0) {
    throw ConfigError("train: warmup_ratio must be in [0, 1]");
  }
  if (threshold < 0.0 || threshold > 1.0) {
    throw ConfigError("train: threshold must be in [0, 1]");
  }
}

namespace {

LabelMatrix to_label_matrix(const std::vector<LabeledExample>& labels) {
  LabelMatrix m;
  m.reserve(labels.size());
  for (const LabeledExample& ex : labels) {
    m.emplace_back(ex.labels.begin(), ex.labels.end());
  }
  return m;
}

PredictionBatch predict_all(const HybridModel& model,
                            const std::vector<TokenizedSequence>& seqs,
                            double threshold) {
  PredictionBatch all;
  all.threshold = threshold;
  Rng fwd(0);  // eval mode consumes no randomness
  constexpr std::size_t kChunk = 64;
  for (std::size_t at = 0; at < seqs.size(); at += kChunk) {
    std::vector<TokenizedSequence> chunk(
        seqs.begin() + at,
        seqs.begin() + std::min(seqs.size(), at + kChunk));
    PredictionBatch p = predict(model.forward(chunk, false, fwd), threshold);
    all.logits.insert(all.logits.end(), p.logits.begin(), p.logits.end());
    all.probabilities.insert(all.probabilities.end(), p.probabilities.begin(),
                             p.probabilities.end());
    all.hard.insert(all.hard.end(), p.hard.begin(), p.hard.end());
  }
  return all;
}

}  // namespace

std::vector<std::vector<double>> snapshot_params(const HybridModel& model) {
  std::vector<std::vector<double>> out;
  out.reserve(model.params().size());
  for (const auto& e : model.params().entries()) {
    out.push_back(e.tensor.values());
  }
  return out;
}

void restore_snapshot(HybridModel& model,
                      const std::vector<std::vector<double>>& values) {
  auto& entries = model.params().entries();
  if (values.size() != entries.size()) {
    throw ShapeError("restore_snapshot: entry count mismatch");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (values[i].size() != entries[i].tensor.numel()) {
      throw ShapeError("restore_snapshot: size mismatch for '" +
                       entries[i].name + "'");
    }
    entries[i].tensor.values() = values[i];
  }
}

double evaluate_loss(const HybridModel& model,
                     const std::vector<TokenizedSequence>& seqs,
                     const std::vector<LabeledExample>& labels) {
  if (seqs.empty()) return 0.0;
  Rng fwd(0);
  double total = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t at = 0; at < seqs.size(); at += kChunk) {
    const std::size_t end = std::min(seqs.size(), at + kChunk);
    std::vector<TokenizedSequence> chunk(seqs.begin() + at, seqs.begin() + end);
    std::vector<LabeledExample> lab(labels.begin() + at, labels.begin() + end);
    Tensor loss = bce_loss(model.forward(chunk, false, fwd), label_tensor(lab));
    total += loss.item() * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(seqs.size());
}

MetricsReport evaluate_model(const HybridModel& model,
                             const std::vector<TokenizedSequence>& seqs,
                             const std::vector<LabeledExample>& labels,
                             double threshold) {
  PredictionBatch p = predict_all(model, seqs, threshold);
  return compute_report(to_label_matrix(labels), p.hard, p.probabilities);
}

RocResult evaluate_roc(const HybridModel& model,
                       const std::vector<TokenizedSequence>& seqs,
                       const std::vector<LabeledExample>& labels) {
  PredictionBatch p = predict_all(model, seqs, 0.5);
  return roc_auc(to_label_matrix(labels), p.probabilities);
}

TrainResult train_model(HybridModel& model,
                        const std::vector<TokenizedSequence>& train_seqs,
                        const std::vector<LabeledExample>& train_labels,
                        const std::vector<TokenizedSequence>& val_seqs,
                        const std::vector<LabeledExample>& val_labels,
                        const TrainOptions& opts) {
  opts.validate();
  if (train_seqs.size() != train_labels.size() ||
      val_seqs.size() != val_labels.size()) {
    throw ShapeError("train: sequence/label count mismatch");
  }
  if (train_seqs.empty()) throw ConfigError("train: empty training set");

  model.freeze_bottom_layers(opts.freeze_bottom_k);
  AdamW opt(model.params(), opts.adamw);
  const long steps_per_epoch =
      (static_cast<long>(train_seqs.size()) + opts.batch_size - 1) /
      opts.batch_size;
  Schedule schedule;
  schedule.total_steps = std::max<long>(1, opts.epochs * steps_per_epoch);
  schedule.warmup_ratio = opts.warmup_ratio;

  Rng shuffle_rng = substream(opts.seed, "shuffle");
  Rng dropout_rng = substream(opts.seed, "dropout");

  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::vector<std::size_t> order(train_seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t end = std::min(
          order.size(), at + static_cast<std::size_t>(opts.batch_size));
      std::vector<TokenizedSequence> batch;
      std::vector<LabeledExample> batch_labels;
      batch.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) {
        batch.push_back(train_seqs[order[i]]);
        batch_labels.push_back(train_labels[order[i]]);
      }
      Tape tape;
      Tensor loss;
      {
        Tape::Scope scope(tape);
        loss = bce_loss(model.forward(batch, true, dropout_rng),
                        label_tensor(batch_labels));
        tape.backward(loss);
      }
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        double grad_norm_sq = 0.0;
        for (const auto& e : model.params().entries()) {
          for (double g : e.tensor.grad_view()) grad_norm_sq += g * g;
        }
        throw std::runtime_error(
            "train: non-finite loss " + std::to_string(loss_value) +
            " at epoch " + std::to_string(epoch) + " step " +
            std::to_string(step) + " (grad norm " +
            std::to_string(std::sqrt(grad_norm_sq)) + ")");
      }
      epoch_loss += loss_value * static_cast<double>(batch.size());
      clip_global_norm(model.params(), opts.clip_norm);
      opt.step(model.params(), schedule_lr(step, schedule, opts.adamw.lr));
      ++step;
      model.params().zero_grad_all();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train_seqs.size());
    if (!val_seqs.empty()) {
      stats.val_loss = evaluate_loss(model, val_seqs, val_labels);
      MetricsReport r =
          evaluate_model(model, val_seqs, val_labels, opts.threshold);
      stats.val_accuracy = r.accuracy;
      if (result.best_epoch < 0 || stats.val_loss < result.best_val_loss) {
        result.best_epoch = epoch;
        result.best_val_loss = stats.val_loss;
        result.best_values = snapshot_params(model);
      }
    }
    result.curve.push_back(stats);
  }
  return result;
}

void write_curve_file(const std::string& path,
                      const std::vector<EpochStats>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write curve file: " + path);
  out << "epoch,train_loss,val_loss,val_acc\n";
  char buf[128];
  for (const EpochStats& s : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", s.epoch,
                  s.train_loss, s.val_loss, s.val_accuracy);
    out << buf;
  }
}

}  // namespace multitox
