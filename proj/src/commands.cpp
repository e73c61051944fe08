#include "multitox/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "multitox/errors.hpp"
#include "multitox/explain.hpp"
#include "multitox/train.hpp"

namespace multitox {

namespace {

namespace fs = std::filesystem;

CleaningConfig cleaning_from(const Config& cfg) {
  CleaningConfig cleaning;
  if (cfg.has("stopwords")) {
    cleaning.stopwords = load_word_list(cfg.require_str("stopwords"));
  }
  if (cfg.has("abbreviations")) {
    cleaning.abbreviation_map =
        load_abbreviation_map(cfg.require_str("abbreviations"));
  }
  cleaning.max_char_repeat =
      static_cast<int>(cfg.get_long("max_char_repeat", 2));
  cleaning.validate();
  return cleaning;
}

ModelConfig model_config_from(const Config& cfg, int vocab_size) {
  const std::string preset = cfg.get_str("preset", "desk");
  ModelConfig mc;
  if (preset == "desk") {
    mc = ModelConfig::desk_preset(vocab_size);
  } else if (preset == "paper") {
    mc = ModelConfig::paper_preset(vocab_size);
  } else {
    throw ConfigError("unknown preset '" + preset + "' (desk or paper)");
  }
  mc.encoder.n_layers =
      static_cast<int>(cfg.get_long("n_layers", mc.encoder.n_layers));
  mc.encoder.d_model =
      static_cast<int>(cfg.get_long("d_model", mc.encoder.d_model));
  mc.encoder.n_heads =
      static_cast<int>(cfg.get_long("n_heads", mc.encoder.n_heads));
  mc.encoder.d_ff = static_cast<int>(cfg.get_long("d_ff", mc.encoder.d_ff));
  mc.encoder.max_len =
      static_cast<int>(cfg.get_long("max_len", mc.encoder.max_len));
  mc.encoder.dropout_p =
      cfg.get_double("encoder_dropout", mc.encoder.dropout_p);
  mc.lstm.input_dim = mc.encoder.d_model;
  mc.lstm.hidden_dim =
      static_cast<int>(cfg.get_long("lstm_hidden", mc.lstm.hidden_dim));
  mc.lstm.n_layers =
      static_cast<int>(cfg.get_long("lstm_layers", mc.lstm.n_layers));
  mc.lstm.interlayer_dropout_p =
      cfg.get_double("lstm_dropout", mc.lstm.interlayer_dropout_p);
  mc.lstm.mask_aware = cfg.get_bool("lstm_mask_aware", false);
  mc.head_dropout_p = cfg.get_double("head_dropout", mc.head_dropout_p);
  mc.validate();
  return mc;
}

TrainOptions train_options_from(const Config& cfg) {
  TrainOptions opts;
  opts.epochs = static_cast<int>(cfg.get_long("epochs", -1));
  if (opts.epochs < 0) {
    throw ConfigError("missing required config key 'epochs'");
  }
  opts.batch_size = static_cast<int>(cfg.get_long("batch_size", 32));
  opts.adamw.lr = cfg.get_double("lr", 1e-5);
  opts.adamw.weight_decay = cfg.get_double("weight_decay", 0.01);
  opts.adamw.beta1 = cfg.get_double("beta1", 0.9);
  opts.adamw.beta2 = cfg.get_double("beta2", 0.999);
  opts.adamw.eps = cfg.get_double("eps", 1e-8);
  opts.adamw.decay_filter = !cfg.get_bool("decay_all_params", false);
  opts.warmup_ratio = cfg.get_double("warmup_ratio", 0.1);
  opts.clip_norm = cfg.get_double("clip_norm", 1.0);
  opts.threshold = cfg.get_double("threshold", 0.5);
  opts.freeze_bottom_k =
      static_cast<int>(cfg.get_long("freeze_bottom_k", 0));
  opts.seed = cfg.require_u64("seed");
  opts.validate();
  return opts;
}

enum class SamplingMode { kNone, kUnder, kOver };

SamplingMode sampling_from(const Config& cfg) {
  const std::string mode = cfg.get_str("sampling", "none");
  if (mode == "none") return SamplingMode::kNone;
  if (mode == "under") return SamplingMode::kUnder;
  if (mode == "over") return SamplingMode::kOver;
  throw ConfigError("sampling must be one of none|under|over, got '" + mode +
                    "'");
}

std::vector<LabeledExample> apply_sampling(
    const std::vector<LabeledExample>& train, SamplingMode mode,
    std::uint64_t seed, Provenance* provenance) {
  switch (mode) {
    case SamplingMode::kNone:
      *provenance = Provenance::kOriginal;
      return train;
    case SamplingMode::kUnder:
      *provenance = Provenance::kUndersampled;
      return undersample(train, substream_seed(seed, "sampling"));
    case SamplingMode::kOver:
      *provenance = Provenance::kOversampled;
      return oversample(train, substream_seed(seed, "sampling"));
  }
  *provenance = Provenance::kOriginal;
  return train;
}

DatasetSplit load_or_split(const Config& cfg, std::uint64_t seed,
                           LoadReport* report) {
  DatasetSplit split;
  if (cfg.has("train")) {
    split.train = load_dataset(cfg.require_str("train"), report);
    if (cfg.has("validation")) {
      split.validation = load_dataset(cfg.require_str("validation"));
    }
    if (cfg.has("test")) {
      split.test = load_dataset(cfg.require_str("test"));
    }
    return split;
  }
  auto examples = load_dataset(cfg.require_str("dataset"), report);
  const double train_frac = cfg.get_double("train_frac", 0.8);
  const double val_frac = cfg.get_double("val_frac", 0.1);
  const double test_frac = cfg.get_double("test_frac", 0.1);
  return split_dataset(examples, train_frac, val_frac, test_frac,
                       substream_seed(seed, "split"));
}

Vocabulary vocab_from_examples(const std::vector<LabeledExample>& train,
                               const CleaningConfig& cleaning,
                               const Config& cfg) {
  std::vector<std::string> cleaned;
  long empty = 0;
  for (const LabeledExample& ex : train) {
    std::string c = clean(ex.text, cleaning);
    if (c.empty()) {
      ++empty;
      continue;
    }
    cleaned.push_back(std::move(c));
  }
  if (empty > 0) {
    log_warning("vocab: " + std::to_string(empty) +
                " training texts were empty after cleaning");
  }
  if (cleaned.empty()) {
    throw ConfigError("every training text cleaned to empty; check the "
                      "cleaning configuration");
  }
  return build_vocab(cleaned,
                     static_cast<int>(cfg.get_long("vocab_max_size", 4000)),
                     static_cast<int>(cfg.get_long("vocab_min_freq", 1)));
}

std::vector<TokenizedSequence> encode_all(
    const std::vector<LabeledExample>& examples,
    const CleaningConfig& cleaning, const Vocabulary& vocab, int max_len) {
  std::vector<TokenizedSequence> out;
  out.reserve(examples.size());
  for (const LabeledExample& ex : examples) {
    out.push_back(
        encode(tokenize(clean(ex.text, cleaning), vocab), vocab, max_len));
  }
  return out;
}

void write_counts_report(
    const std::string& path,
    const std::vector<std::pair<std::string, ClassCounts>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write counts report: " + path);
  out << "split";
  for (const char* name : kLabelNames) out << "," << name;
  out << ",examples\n";
  for (const auto& [tag, counts] : rows) {
    out << tag;
    for (long c : counts.positives) out << "," << c;
    out << ",-\n";
  }
}

void write_fold_table(const std::string& path,
                      const std::vector<MetricsReport>& folds,
                      const CrossvalSummary& summary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write crossval table: " + path);
  out << "fold,accuracy,hamming_loss,precision,recall,f1,mcc,kappa,auc\n";
  char buf[256];
  auto row = [&](const std::string& tag, const MetricsReport& r) {
    std::snprintf(buf, sizeof(buf),
                  "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", tag.c_str(),
                  r.accuracy, r.hamming, r.precision, r.recall, r.f1, r.mcc,
                  r.kappa, r.auc);
    out << buf;
  };
  for (std::size_t f = 0; f < folds.size(); ++f) {
    row(std::to_string(f + 1), folds[f]);
  }
  row("average", summary.mean);
  row("stddev", summary.stddev);
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

HybridModel open_model(const Config& cfg) {
  return load_checkpoint(cfg.require_str("checkpoint"));
}

std::vector<int> label_subset_from(const Config& cfg) {
  std::vector<int> labels;
  const std::string spec = cfg.get_str("labels", "");
  if (spec.empty()) {
    for (int k = 0; k < kNumLabels; ++k) labels.push_back(k);
    return labels;
  }
  std::string token;
  std::istringstream is(spec);
  while (std::getline(is, token, ',')) {
    const int k = label_index(token);
    if (k < 0) throw ConfigError("unknown label '" + token + "'");
    labels.push_back(k);
  }
  return labels;
}

}  // namespace

void cmd_train(const Config& cfg) {
  const std::uint64_t seed = cfg.require_u64("seed");
  const std::string out_dir = cfg.require_str("out_dir");
  ensure_out_dir(out_dir);

  const CleaningConfig cleaning = cleaning_from(cfg);
  LoadReport report;
  DatasetSplit split = load_or_split(cfg, seed, &report);
  if (report.dropped_duplicates || report.dropped_empty) {
    std::cout << "dropped " << report.dropped_duplicates << " duplicate and "
              << report.dropped_empty << " empty rows\n";
  }

  const ClassCounts before = class_counts(split.train);
  split.train = apply_sampling(split.train, sampling_from(cfg), seed,
                               &split.train_provenance);
  const ClassCounts after = class_counts(split.train);

  Vocabulary vocab = vocab_from_examples(split.train, cleaning, cfg);
  const ModelConfig mc = model_config_from(cfg, vocab.size());

  auto train_seqs =
      encode_all(split.train, cleaning, vocab, mc.encoder.max_len);
  auto val_seqs =
      encode_all(split.validation, cleaning, vocab, mc.encoder.max_len);

  Rng init_rng = substream(seed, "init");
  HybridModel model(mc, init_rng);
  TrainOptions opts = train_options_from(cfg);

  std::cout << "training on " << split.train.size() << " examples ("
            << provenance_name(split.train_provenance) << "), "
            << model.params().total_parameters() << " parameters\n";
  TrainResult result = train_model(model, train_seqs, split.train, val_seqs,
                                   split.validation, opts);

  if (result.best_epoch >= 0) {
    restore_snapshot(model, result.best_values);
    std::cout << "best validation loss " << result.best_val_loss
              << " at epoch " << result.best_epoch << "\n";
  }
  save_checkpoint(model, out_dir + "/model.ckpt");
  vocab.save(out_dir + "/vocab.txt");
  write_curve_file(out_dir + "/curves.csv", result.curve);
  save_dataset(out_dir + "/train.csv", split.train, split.train_provenance);
  save_dataset(out_dir + "/validation.csv", split.validation);
  save_dataset(out_dir + "/test.csv", split.test);
  write_counts_report(out_dir + "/counts.txt",
                      {{"original", before},
                       {provenance_name(split.train_provenance), after}});
  std::cout << "wrote " << out_dir << "/model.ckpt\n";
}

void cmd_evaluate(const Config& cfg) {
  cfg.require_u64("seed");
  const std::string out_dir = cfg.require_str("out_dir");
  ensure_out_dir(out_dir);

  HybridModel model = open_model(cfg);
  Vocabulary vocab = Vocabulary::load(cfg.require_str("vocab"));
  if (vocab.size() != model.config().encoder.vocab_size) {
    throw ConfigError("vocabulary size " + std::to_string(vocab.size()) +
                      " does not match checkpoint vocab_size " +
                      std::to_string(model.config().encoder.vocab_size));
  }
  const CleaningConfig cleaning = cleaning_from(cfg);

  LoadReport report;
  auto examples = load_dataset(cfg.require_str("split"), &report);
  if (report.provenance != Provenance::kOriginal) {
    throw ConfigError("refusing to evaluate on a resampled split (provenance "
                      "'" + std::string(provenance_name(report.provenance)) +
                      "'); evaluation must use original data");
  }

  auto seqs = encode_all(examples, cleaning, vocab,
                         model.config().encoder.max_len);
  const double threshold = cfg.get_double("threshold", 0.5);
  MetricsReport r = evaluate_model(model, seqs, examples, threshold);
  write_metrics_report(out_dir + "/metrics.txt", r);
  RocResult roc = evaluate_roc(model, seqs, examples);
  std::vector<std::string> names(kLabelNames.begin(), kLabelNames.end());
  write_roc_files(out_dir, roc, names);
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "accuracy %.4f hamming %.4f f1 %.4f auc %.4f", r.accuracy,
                r.hamming, r.f1, r.auc);
  std::cout << buf << " on " << r.n_examples << " examples\n";
}

void cmd_crossval(const Config& cfg) {
  const std::uint64_t seed = cfg.require_u64("seed");
  const std::string out_dir = cfg.require_str("out_dir");
  ensure_out_dir(out_dir);
  const int k = static_cast<int>(cfg.get_long("kfolds", 5));
  const CleaningConfig cleaning = cleaning_from(cfg);
  const SamplingMode sampling = sampling_from(cfg);
  TrainOptions base_opts = train_options_from(cfg);

  auto examples = load_dataset(cfg.require_str("dataset"));
  auto folds = kfold_partition(examples, k, substream_seed(seed, "split"));

  std::vector<MetricsReport> reports(folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t f = next.fetch_add(1);
      if (f >= folds.size()) return;
      const std::uint64_t fold_seed =
          substream_seed(seed, "fold" + std::to_string(f));
      Provenance provenance;
      auto train_set =
          apply_sampling(folds[f].train, sampling, fold_seed, &provenance);
      Vocabulary vocab = vocab_from_examples(train_set, cleaning, cfg);
      ModelConfig mc = model_config_from(cfg, vocab.size());
      auto train_seqs = encode_all(train_set, cleaning, vocab,
                                   mc.encoder.max_len);
      auto held_seqs = encode_all(folds[f].held_out, cleaning, vocab,
                                  mc.encoder.max_len);
      Rng init_rng = substream(fold_seed, "init");
      HybridModel model(mc, init_rng);
      TrainOptions opts = base_opts;
      opts.seed = fold_seed;
      train_model(model, train_seqs, train_set, {}, {}, opts);
      reports[f] = evaluate_model(model, held_seqs, folds[f].held_out,
                                  base_opts.threshold);
    }
  };

  const long jobs =
      std::max<long>(1, std::min<long>(cfg.get_long("jobs", 1),
                                       static_cast<long>(folds.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (long t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t f = 0; f < reports.size(); ++f) {
    write_metrics_report(out_dir + "/fold" + std::to_string(f + 1) +
                             "_metrics.txt",
                         reports[f]);
  }
  CrossvalSummary summary = crossval_aggregate(reports);
  write_fold_table(out_dir + "/crossval.csv", reports, summary);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d-fold accuracy %.4f +- %.4f", k,
                summary.mean.accuracy, summary.stddev.accuracy);
  std::cout << buf << "\n";
}

void cmd_resample(const Config& cfg) {
  const std::uint64_t seed = cfg.require_u64("seed");
  const std::string out_dir = cfg.require_str("out_dir");
  ensure_out_dir(out_dir);
  const SamplingMode mode = sampling_from(cfg);
  if (mode == SamplingMode::kNone) {
    throw ConfigError("resample needs sampling=under or sampling=over");
  }
  const std::string path =
      cfg.has("train") ? cfg.require_str("train") : cfg.require_str("dataset");
  auto train = load_dataset(path);
  const ClassCounts before = class_counts(train);
  Provenance provenance;
  auto resampled = apply_sampling(train, mode, seed, &provenance);
  const ClassCounts after = class_counts(resampled);

  const std::string out_file =
      out_dir + "/train_" + provenance_name(provenance) + ".csv";
  save_dataset(out_file, resampled, provenance);
  write_counts_report(out_dir + "/counts.txt",
                      {{"original", before},
                       {provenance_name(provenance), after}});
  std::cout << "wrote " << out_file << " (" << resampled.size()
            << " examples)\n";
}

void cmd_explain(const Config& cfg) {
  const std::uint64_t seed = cfg.require_u64("seed");
  const std::string out_dir = cfg.require_str("out_dir");
  ensure_out_dir(out_dir);

  HybridModel model = open_model(cfg);
  Vocabulary vocab = Vocabulary::load(cfg.require_str("vocab"));
  const CleaningConfig cleaning = cleaning_from(cfg);
  const std::string text = cfg.require_str("text");
  const int n = static_cast<int>(cfg.get_long("n_perturbations", 200));

  auto explanations = explain_comment(text, model, vocab, cleaning,
                                      label_subset_from(cfg), n, seed);
  write_explanations(out_dir, text, explanations);
  for (const Explanation& ex : explanations) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s p=%.4f top=%s", ex.label.c_str(),
                  ex.base_probability,
                  ex.weighted_tokens.empty()
                      ? "-"
                      : ex.weighted_tokens[0].first.c_str());
    std::cout << buf << "\n";
  }
  std::cout << "wrote " << out_dir << "/explanation.txt\n";
}

}  // namespace multitox
