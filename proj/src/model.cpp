#include "multitox/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "multitox/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace multitox {

void ModelConfig::validate() const {
  encoder.validate();
  lstm.validate();
  if (lstm.input_dim != encoder.d_model) {
    throw ConfigError("model: lstm input_dim must equal encoder d_model");
  }
  if (head_dropout_p < 0.0 || head_dropout_p >= 1.0) {
    throw ConfigError("model: head dropout must be in [0, 1)");
  }
  if (n_labels < 1) throw ConfigError("model: n_labels must be >= 1");
}

std::size_t ModelConfig::parameter_count() const {
  return encoder.parameter_count() + lstm.parameter_count() +
         static_cast<std::size_t>(n_labels) *
             static_cast<std::size_t>(lstm.hidden_dim) +
         static_cast<std::size_t>(n_labels);
}

ModelConfig ModelConfig::desk_preset(int vocab_size) {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig::desk_preset(vocab_size);
  cfg.lstm.input_dim = cfg.encoder.d_model;
  cfg.lstm.hidden_dim = 16;
  return cfg;
}

ModelConfig ModelConfig::paper_preset(int vocab_size) {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig::paper_preset(vocab_size);
  cfg.lstm.input_dim = cfg.encoder.d_model;
  cfg.lstm.hidden_dim = 256;
  return cfg;
}

HybridModel::HybridModel(const ModelConfig& cfg, Rng& init_rng)
    : config_(cfg) {
  config_.validate();
  encoder = EncoderState(cfg.encoder, init_rng);
  lstm = LstmState(cfg.lstm, init_rng);
  w_clf = random_trunc_normal({static_cast<std::size_t>(cfg.n_labels),
                               static_cast<std::size_t>(cfg.lstm.hidden_dim)},
                              init_rng, 0.02);
  b_clf = Tensor::zeros({static_cast<std::size_t>(cfg.n_labels)});
  encoder.register_params(registry_);
  lstm.register_params(registry_);
  registry_.add("head.w_clf", w_clf, true);
  registry_.add("head.b_clf", b_clf, false);
}

Tensor HybridModel::forward(const std::vector<TokenizedSequence>& batch,
                            bool training, Rng& rng) const {
  if (batch.empty()) throw ShapeError("forward: empty batch");
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (const TokenizedSequence& seq : batch) {
    Tensor h = encode_sequence(seq, encoder, training, rng);
    Tensor h_final = run_stacked(h, seq.mask, lstm, training, rng);
    Tensor dropped = dropout(h_final, config_.head_dropout_p, training, rng);
    rows.push_back(add_rowvec(matmul_nt(dropped, w_clf), b_clf));
  }
  return concat_rows(rows);
}

void HybridModel::freeze_bottom_layers(int k) {
  if (k <= 0) return;
  for (auto& e : registry_.entries()) {
    if (e.name.rfind("encoder.token_table", 0) == 0 ||
        e.name.rfind("encoder.pos_table", 0) == 0 ||
        e.name.rfind("encoder.seg_table", 0) == 0 ||
        e.name.rfind("encoder.embed_ln", 0) == 0) {
      e.frozen = true;
      continue;
    }
    for (int l = 0; l < k; ++l) {
      if (e.name.rfind("encoder.layer" + std::to_string(l) + ".", 0) == 0) {
        e.frozen = true;
      }
    }
  }
}

PredictionBatch predict(const Tensor& logits, double threshold) {
  PredictionBatch out;
  out.threshold = threshold;
  const std::size_t b = logits.rows(), k = logits.cols();
  out.logits.assign(b, std::vector<double>(k));
  out.probabilities.assign(b, std::vector<double>(k));
  out.hard.assign(b, std::vector<int>(k));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double z = logits.at(i, j);
      const double p = 1.0 / (1.0 + std::exp(-z));
      out.logits[i][j] = z;
      out.probabilities[i][j] = p;
      out.hard[i][j] = p >= threshold ? 1 : 0;
    }
  }
  return out;
}

Tensor bce_loss(const Tensor& logits, const Tensor& targets) {
  return bce_with_logits(logits, targets);
}

Tensor label_tensor(const std::vector<LabeledExample>& batch) {
  std::vector<double> vals;
  vals.reserve(batch.size() * kNumLabels);
  for (const LabeledExample& ex : batch) {
    for (int v : ex.labels) vals.push_back(static_cast<double>(v));
  }
  return Tensor::from_values(
      {batch.size(), static_cast<std::size_t>(kNumLabels)}, std::move(vals));
}

// ---- checkpoint ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'T', 'X', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 64;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointTruncatedError("checkpoint: unexpected end of file");
  return v;
}

std::string config_block(const ModelConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "encoder.n_layers " << cfg.encoder.n_layers << "\n";
  os << "encoder.d_model " << cfg.encoder.d_model << "\n";
  os << "encoder.n_heads " << cfg.encoder.n_heads << "\n";
  os << "encoder.d_ff " << cfg.encoder.d_ff << "\n";
  os << "encoder.max_len " << cfg.encoder.max_len << "\n";
  os << "encoder.vocab_size " << cfg.encoder.vocab_size << "\n";
  os << "encoder.dropout_p " << cfg.encoder.dropout_p << "\n";
  os << "encoder.n_segments " << cfg.encoder.n_segments << "\n";
  os << "lstm.hidden_dim " << cfg.lstm.hidden_dim << "\n";
  os << "lstm.n_layers " << cfg.lstm.n_layers << "\n";
  os << "lstm.dropout_p " << cfg.lstm.interlayer_dropout_p << "\n";
  os << "lstm.mask_aware " << (cfg.lstm.mask_aware ? 1 : 0) << "\n";
  os << "head.dropout_p " << cfg.head_dropout_p << "\n";
  os << "n_labels " << cfg.n_labels << "\n";
  return os.str();
}

ModelConfig parse_config_block(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string key;
  while (is >> key) {
    if (key == "encoder.n_layers") is >> cfg.encoder.n_layers;
    else if (key == "encoder.d_model") is >> cfg.encoder.d_model;
    else if (key == "encoder.n_heads") is >> cfg.encoder.n_heads;
    else if (key == "encoder.d_ff") is >> cfg.encoder.d_ff;
    else if (key == "encoder.max_len") is >> cfg.encoder.max_len;
    else if (key == "encoder.vocab_size") is >> cfg.encoder.vocab_size;
    else if (key == "encoder.dropout_p") is >> cfg.encoder.dropout_p;
    else if (key == "encoder.n_segments") is >> cfg.encoder.n_segments;
    else if (key == "lstm.hidden_dim") is >> cfg.lstm.hidden_dim;
    else if (key == "lstm.n_layers") is >> cfg.lstm.n_layers;
    else if (key == "lstm.dropout_p") is >> cfg.lstm.interlayer_dropout_p;
    else if (key == "lstm.mask_aware") {
      int v = 0;
      is >> v;
      cfg.lstm.mask_aware = v != 0;
    } else if (key == "head.dropout_p") is >> cfg.head_dropout_p;
    else if (key == "n_labels") is >> cfg.n_labels;
    else {
      std::string skipped;
      std::getline(is, skipped);
    }
  }
  cfg.lstm.input_dim = cfg.encoder.d_model;
  return cfg;
}

}  // namespace

void save_checkpoint(const HybridModel& model, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + tmp);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    const std::string cfg = config_block(model.config());
    write_pod(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const auto& entries = model.params().entries();
    write_pod(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
      write_pod(out, static_cast<std::uint16_t>(e.name.size()));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      write_pod(out, kDtypeF64);
      write_pod(out, static_cast<std::uint8_t>(e.tensor.ndim()));
      for (std::size_t d : e.tensor.shape()) {
        write_pod(out, static_cast<std::uint64_t>(d));
      }
      const auto& vals = e.tensor.values();
      out.write(reinterpret_cast<const char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("cannot move checkpoint into place: " + path);
  }
}

HybridModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointVersionError("checkpoint: bad magic bytes in " + path);
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw CheckpointVersionError("checkpoint: version " +
                                 std::to_string(version) + " unsupported");
  }
  const auto cfg_len = read_pod<std::uint32_t>(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw CheckpointTruncatedError("checkpoint: truncated config");

  ModelConfig cfg = parse_config_block(cfg_text);
  Rng scratch(0);  // values are overwritten below
  HybridModel model(cfg, scratch);

  const auto n_params = read_pod<std::uint32_t>(in);
  if (n_params != model.params().size()) {
    throw CheckpointShapeError(
        "checkpoint: holds " + std::to_string(n_params) +
        " parameters, model wants " + std::to_string(model.params().size()));
  }
  std::vector<bool> seen(n_params, false);
  for (std::uint32_t p = 0; p < n_params; ++p) {
    const auto name_len = read_pod<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw CheckpointTruncatedError("checkpoint: truncated name");
    const auto dtype = read_pod<std::uint8_t>(in);
    if (dtype != kDtypeF64) {
      throw CheckpointVersionError("checkpoint: unsupported dtype tag " +
                                   std::to_string(dtype));
    }
    const auto ndim = read_pod<std::uint8_t>(in);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    if (!model.params().contains(name)) {
      throw CheckpointShapeError("checkpoint: unknown parameter '" + name +
                                 "'");
    }
    auto& entry = model.params().at(name);
    if (entry.tensor.shape() != shape) {
      throw CheckpointShapeError("checkpoint: shape mismatch for '" + name +
                                 "'");
    }
    auto& vals = entry.tensor.values();
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!in) {
      throw CheckpointTruncatedError("checkpoint: truncated data for '" +
                                     name + "'");
    }
    for (std::size_t i = 0; i < model.params().entries().size(); ++i) {
      if (model.params().entries()[i].name == name) seen[i] = true;
    }
  }
  for (bool s : seen) {
    if (!s) throw CheckpointShapeError("checkpoint: missing parameters");
  }
  return model;
}

}  // namespace multitox
