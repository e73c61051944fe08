#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "multitox/commands.hpp"
#include "multitox/errors.hpp"
#include "multitox/train.hpp"
#include "support/synth_corpus.hpp"

using namespace multitox;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const {
    return (sub.empty() ? path : path / sub).string();
  }
};

Config tiny_train_config(const std::string& dataset,
                         const std::string& out_dir) {
  Config cfg;
  cfg.set("dataset", dataset);
  cfg.set("out_dir", out_dir);
  cfg.set("seed", "4242");
  cfg.set("epochs", "2");
  cfg.set("batch_size", "8");
  cfg.set("lr", "1e-3");
  cfg.set("n_layers", "1");
  cfg.set("d_model", "16");
  cfg.set("n_heads", "2");
  cfg.set("d_ff", "24");
  cfg.set("max_len", "16");
  cfg.set("lstm_hidden", "8");
  return cfg;
}

std::string write_corpus(const TempDir& dir, int n, std::uint64_t seed) {
  Rng rng = substream(seed, "synth");
  auto corpus = synth::make_corpus(n, rng);
  const std::string path = dir.str("corpus.csv");
  save_dataset(path, corpus);
  return path;
}

}  // namespace

TEST_CASE("cmd_train writes checkpoint, vocab, curves, and splits") {
  TempDir dir("multitox_cmd_train");
  const std::string dataset = write_corpus(dir, 40, 1);
  Config cfg = tiny_train_config(dataset, dir.str("run"));
  cmd_train(cfg);

  for (const char* f : {"run/model.ckpt", "run/vocab.txt", "run/curves.csv",
                        "run/train.csv", "run/validation.csv", "run/test.csv",
                        "run/counts.txt"}) {
    CHECK(fs::exists(dir.str(f)));
  }
  // Curve has one row per epoch plus header.
  std::string curves = read_file(dir.str("run/curves.csv"));
  CHECK(std::count(curves.begin(), curves.end(), '\n') == 3);
  CHECK(curves.rfind("epoch,train_loss,val_loss,val_acc\n", 0) == 0);

  // The checkpoint opens and matches the saved vocab.
  HybridModel model = load_checkpoint(dir.str("run/model.ckpt"));
  Vocabulary vocab = Vocabulary::load(dir.str("run/vocab.txt"));
  CHECK(model.config().encoder.vocab_size == vocab.size());
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  TempDir dir("multitox_cmd_repro");
  const std::string dataset = write_corpus(dir, 32, 2);

  Config a = tiny_train_config(dataset, dir.str("a"));
  Config b = tiny_train_config(dataset, dir.str("b"));
  cmd_train(a);
  cmd_train(b);
  for (const char* f : {"model.ckpt", "vocab.txt", "curves.csv", "train.csv",
                        "counts.txt"}) {
    CHECK(read_file(dir.str("a/") + f) == read_file(dir.str("b/") + f));
  }

  Config c = tiny_train_config(dataset, dir.str("c"));
  c.set("seed", "999");
  cmd_train(c);
  CHECK(read_file(dir.str("a/model.ckpt")) !=
        read_file(dir.str("c/model.ckpt")));
}

TEST_CASE("cmd_train with zero epochs checkpoints the initialization") {
  TempDir dir("multitox_cmd_zero");
  const std::string dataset = write_corpus(dir, 20, 3);
  Config cfg = tiny_train_config(dataset, dir.str("run"));
  cfg.set("epochs", "0");
  cmd_train(cfg);
  std::string curves = read_file(dir.str("run/curves.csv"));
  CHECK(curves == "epoch,train_loss,val_loss,val_acc\n");
  CHECK(fs::exists(dir.str("run/model.ckpt")));
}

TEST_CASE("cmd_train with resampling tags the training split") {
  TempDir dir("multitox_cmd_sampled");
  const std::string dataset = write_corpus(dir, 48, 4);
  Config cfg = tiny_train_config(dataset, dir.str("run"));
  cfg.set("sampling", "over");
  cfg.set("epochs", "1");
  cmd_train(cfg);
  std::string train_csv = read_file(dir.str("run/train.csv"));
  CHECK(train_csv.rfind("# provenance: oversampled\n", 0) == 0);
  // Validation and test keep original provenance.
  std::string val_csv = read_file(dir.str("run/validation.csv"));
  CHECK(val_csv.rfind("text,", 0) == 0);
}

TEST_CASE("cmd_evaluate writes metrics and refuses resampled splits") {
  TempDir dir("multitox_cmd_eval");
  const std::string dataset = write_corpus(dir, 40, 5);
  Config train_cfg = tiny_train_config(dataset, dir.str("run"));
  cmd_train(train_cfg);

  Config eval_cfg;
  eval_cfg.set("checkpoint", dir.str("run/model.ckpt"));
  eval_cfg.set("vocab", dir.str("run/vocab.txt"));
  eval_cfg.set("split", dir.str("run/test.csv"));
  eval_cfg.set("out_dir", dir.str("eval"));
  eval_cfg.set("seed", "1");
  cmd_evaluate(eval_cfg);
  CHECK(fs::exists(dir.str("eval/metrics.txt")));
  CHECK(fs::exists(dir.str("eval/roc_bully.csv")));
  CHECK(fs::exists(dir.str("eval/roc_spam.csv")));

  // A resampled file is rejected with a config error.
  Rng rng = substream(6, "synth");
  auto corpus = synth::make_corpus(20, rng);
  save_dataset(dir.str("resampled.csv"), corpus, Provenance::kOversampled);
  Config bad = eval_cfg;
  bad.set("split", dir.str("resampled.csv"));
  bad.set("out_dir", dir.str("eval2"));
  CHECK_THROWS_AS(cmd_evaluate(bad), ConfigError);
}

TEST_CASE("cmd_resample writes the resampled file and a counts table") {
  TempDir dir("multitox_cmd_resample");
  const std::string dataset = write_corpus(dir, 40, 7);
  Config cfg;
  cfg.set("dataset", dataset);
  cfg.set("sampling", "under");
  cfg.set("out_dir", dir.str("rs"));
  cfg.set("seed", "11");
  cmd_resample(cfg);
  CHECK(fs::exists(dir.str("rs/train_undersampled.csv")));
  std::string counts = read_file(dir.str("rs/counts.txt"));
  CHECK(counts.rfind("split,bully,sexual,religious,threat,spam", 0) == 0);
  CHECK(counts.find("original,") != std::string::npos);
  CHECK(counts.find("undersampled,") != std::string::npos);

  LoadReport report;
  auto resampled = load_dataset(dir.str("rs/train_undersampled.csv"), &report);
  CHECK(report.provenance == Provenance::kUndersampled);
  CHECK(!resampled.empty());

  Config bad = cfg;
  bad.set("sampling", "none");
  CHECK_THROWS_AS(cmd_resample(bad), ConfigError);
}

TEST_CASE("cmd_crossval emits per-fold reports and a fold table") {
  TempDir dir("multitox_cmd_cv");
  const std::string dataset = write_corpus(dir, 30, 8);
  Config cfg = tiny_train_config(dataset, dir.str("cv"));
  cfg.set("epochs", "1");
  cfg.set("kfolds", "3");
  cmd_crossval(cfg);
  for (int f = 1; f <= 3; ++f) {
    CHECK(fs::exists(dir.str("cv/fold" + std::to_string(f) +
                             "_metrics.txt")));
  }
  std::string table = read_file(dir.str("cv/crossval.csv"));
  CHECK(table.rfind("fold,accuracy,hamming_loss,precision,recall,f1,mcc,"
                    "kappa,auc\n",
                    0) == 0);
  CHECK(table.find("\naverage,") != std::string::npos);
  CHECK(table.find("\nstddev,") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
}

TEST_CASE("crossval with two jobs matches the single-threaded run") {
  TempDir dir("multitox_cmd_cv_jobs");
  const std::string dataset = write_corpus(dir, 24, 9);
  Config cfg = tiny_train_config(dataset, dir.str("cv1"));
  cfg.set("epochs", "1");
  cfg.set("kfolds", "3");
  cmd_crossval(cfg);
  Config cfg2 = tiny_train_config(dataset, dir.str("cv2"));
  cfg2.set("epochs", "1");
  cfg2.set("kfolds", "3");
  cfg2.set("jobs", "2");
  cmd_crossval(cfg2);
  CHECK(read_file(dir.str("cv1/crossval.csv")) ==
        read_file(dir.str("cv2/crossval.csv")));
}

TEST_CASE("cmd_explain writes per-label weight files") {
  TempDir dir("multitox_cmd_explain");
  const std::string dataset = write_corpus(dir, 32, 10);
  Config train_cfg = tiny_train_config(dataset, dir.str("run"));
  cmd_train(train_cfg);

  Config ex;
  ex.set("checkpoint", dir.str("run/model.ckpt"));
  ex.set("vocab", dir.str("run/vocab.txt"));
  ex.set("text", "zorp fill1 fill2 spree fill3");
  ex.set("labels", "bully,spam");
  ex.set("out_dir", dir.str("explain"));
  ex.set("seed", "77");
  cmd_explain(ex);
  CHECK(fs::exists(dir.str("explain/explanation.txt")));
  CHECK(fs::exists(dir.str("explain/explain_bully.csv")));
  CHECK(fs::exists(dir.str("explain/explain_spam.csv")));
  CHECK_FALSE(fs::exists(dir.str("explain/explain_threat.csv")));

  Config bad = ex;
  bad.set("labels", "nonsense");
  CHECK_THROWS_AS(cmd_explain(bad), ConfigError);
}

TEST_CASE("missing required keys are config errors") {
  Config empty;
  CHECK_THROWS_AS(cmd_train(empty), ConfigError);
  Config no_seed;
  no_seed.set("dataset", "/nonexistent.csv");
  no_seed.set("out_dir", "/tmp/multitox_nokey");
  CHECK_THROWS_AS(cmd_train(no_seed), ConfigError);
}

TEST_CASE("config files parse keys, values, and comments") {
  const std::string path = "/tmp/multitox_cfg.txt";
  {
    std::ofstream out(path);
    out << "# a comment\n";
    out << "dataset data/train.csv\n";
    out << "lr 1e-4\n";
    out << "labels bully,spam\n";
    out << "\n";
  }
  Config cfg = Config::from_file(path);
  CHECK(cfg.require_str("dataset") == "data/train.csv");
  CHECK(cfg.get_double("lr", 0) == doctest::Approx(1e-4));
  CHECK(cfg.get_str("labels", "") == "bully,spam");
  CHECK_FALSE(cfg.has("comment"));
  CHECK_THROWS_AS(cfg.require_u64("seed"), ConfigError);
  std::remove(path.c_str());

  CHECK_THROWS_AS(Config::from_file("/nonexistent/cfg"), ConfigError);
}

TEST_CASE("training diverges loudly on a non-finite loss") {
  // A huge learning rate with no clipping would be needed to blow this up
  // quickly; instead feed an lr large enough to overflow the head.
  TempDir dir("multitox_cmd_blowup");
  const std::string dataset = write_corpus(dir, 16, 12);
  Config cfg = tiny_train_config(dataset, dir.str("run"));
  cfg.set("lr", "1e18");
  cfg.set("clip_norm", "1e18");
  cfg.set("epochs", "30");
  bool threw = false;
  try {
    cmd_train(cfg);
  } catch (const std::runtime_error& e) {
    threw = std::string(e.what()).find("non-finite") != std::string::npos ||
            std::string(e.what()).find("loss") != std::string::npos;
  }
  // Divergence is plausible but not guaranteed at this scale; when the run
  // completes the checkpoint must still exist and load.
  if (!threw) {
    CHECK(fs::exists(dir.str("run/model.ckpt")));
  }
}
