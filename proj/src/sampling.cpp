#include "multitox/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "multitox/errors.hpp"
#include "multitox/rng.hpp"

namespace multitox {

const std::array<const char*, kNumLabels> kLabelNames = {
    "bully", "sexual", "religious", "threat", "spam"};

int label_index(const std::string& name) {
  for (int i = 0; i < kNumLabels; ++i) {
    if (name == kLabelNames[i]) return i;
  }
  return -1;
}

bool LabeledExample::has_any_label() const {
  for (int v : labels) {
    if (v) return true;
  }
  return false;
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kOriginal: return "original";
    case Provenance::kUndersampled: return "undersampled";
    case Provenance::kOversampled: return "oversampled";
  }
  return "original";
}

Provenance provenance_from(const std::string& name) {
  if (name == "original") return Provenance::kOriginal;
  if (name == "undersampled") return Provenance::kUndersampled;
  if (name == "oversampled") return Provenance::kOversampled;
  throw ConfigError("unknown provenance tag: " + name);
}

// ---- CSV --------------------------------------------------------------------

namespace {

std::vector<std::string> parse_csv_row(const std::string& line, int lineno) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) {
    throw IoError("line " + std::to_string(lineno) + ": unterminated quote");
  }
  fields.push_back(cur);
  return fields;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

const char* kHeader = "text,bully,sexual,religious,threat,spam";

}  // namespace

std::vector<LabeledExample> load_dataset(const std::string& path,
                                         LoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path);
  LoadReport local;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::vector<LabeledExample> out;
  std::set<std::string> seen_texts;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# provenance:";
      if (line.rfind(key, 0) == 0) {
        std::string tag = line.substr(key.size());
        tag.erase(0, tag.find_first_not_of(' '));
        local.provenance = provenance_from(tag);
      }
      continue;
    }
    if (!header_seen) {
      if (line != kHeader) {
        throw IoError("line " + std::to_string(lineno) +
                      ": expected header '" + kHeader + "', got '" + line +
                      "'");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields = parse_csv_row(line, lineno);
    if (fields.size() != 1 + kNumLabels) {
      throw IoError("line " + std::to_string(lineno) + ": expected " +
                    std::to_string(1 + kNumLabels) + " fields, got " +
                    std::to_string(fields.size()));
    }
    LabeledExample ex;
    ex.text = fields[0];
    for (int c = 0; c < kNumLabels; ++c) {
      const std::string& v = fields[1 + c];
      if (v == "0") {
        ex.labels[c] = 0;
      } else if (v == "1") {
        ex.labels[c] = 1;
      } else {
        throw IoError("line " + std::to_string(lineno) + ": label '" +
                      std::string(kLabelNames[c]) + "' must be 0 or 1, got '" +
                      v + "'");
      }
    }
    if (ex.text.empty()) {
      ++local.dropped_empty;
      continue;
    }
    if (!seen_texts.insert(ex.text).second) {
      ++local.dropped_duplicates;
      continue;
    }
    out.push_back(std::move(ex));
  }
  if (!header_seen) throw IoError(path + ": missing header row");
  if (report) *report = local;
  return out;
}

void save_dataset(const std::string& path,
                  const std::vector<LabeledExample>& examples,
                  Provenance provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset: " + path);
  if (provenance != Provenance::kOriginal) {
    out << "# provenance: " << provenance_name(provenance) << "\n";
  }
  out << kHeader << "\n";
  for (const LabeledExample& ex : examples) {
    out << csv_escape(ex.text);
    for (int v : ex.labels) out << "," << v;
    out << "\n";
  }
}

// ---- counting and resampling -------------------------------------------------

ClassCounts class_counts(const std::vector<LabeledExample>& examples) {
  ClassCounts cc;
  for (const LabeledExample& ex : examples) {
    for (int c = 0; c < kNumLabels; ++c) cc.positives[c] += ex.labels[c];
  }
  return cc;
}

long ClassCounts::min_count() const {
  return *std::min_element(positives.begin(), positives.end());
}

long ClassCounts::max_count() const {
  return *std::max_element(positives.begin(), positives.end());
}

namespace {

void require_all_positive(const ClassCounts& cc, const char* op) {
  for (int c = 0; c < kNumLabels; ++c) {
    if (cc.positives[c] == 0) {
      throw ConfigError(std::string(op) + ": label '" + kLabelNames[c] +
                        "' has no positive example, cannot balance");
    }
  }
}

}  // namespace

std::vector<LabeledExample> undersample(
    const std::vector<LabeledExample>& train, std::uint64_t seed) {
  ClassCounts cc = class_counts(train);
  require_all_positive(cc, "undersample");
  const long target = cc.min_count();
  std::vector<bool> removed(train.size(), false);
  std::array<long, kNumLabels> counts = cc.positives;
  Rng rng(seed);
  auto removable = [&](std::size_t i) {
    if (removed[i] || !train[i].has_any_label()) return false;
    for (int c = 0; c < kNumLabels; ++c) {
      if (train[i].labels[c] && counts[c] <= target) return false;
    }
    return true;
  };
  for (;;) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (removable(i)) candidates.push_back(i);
    }
    if (candidates.empty()) break;
    const std::size_t pick = candidates[rng.next_below(candidates.size())];
    removed[pick] = true;
    for (int c = 0; c < kNumLabels; ++c) counts[c] -= train[pick].labels[c];
  }
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!removed[i]) out.push_back(train[i]);
  }
  return out;
}

std::vector<LabeledExample> oversample(const std::vector<LabeledExample>& train,
                                       std::uint64_t seed) {
  ClassCounts cc = class_counts(train);
  require_all_positive(cc, "oversample");
  const long target = cc.max_count();

  std::array<std::vector<std::size_t>, kNumLabels> carriers;
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (int c = 0; c < kNumLabels; ++c) {
      if (train[i].labels[c]) carriers[c].push_back(i);
    }
  }
  std::array<int, kNumLabels> order = {0, 1, 2, 3, 4};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (cc.positives[a] != cc.positives[b]) {
      return cc.positives[a] < cc.positives[b];
    }
    return a < b;
  });

  std::vector<LabeledExample> out = train;
  std::array<long, kNumLabels> counts = cc.positives;
  Rng rng(seed);
  for (int c : order) {
    while (counts[c] < target) {
      const std::size_t pick =
          carriers[c][rng.next_below(carriers[c].size())];
      out.push_back(train[pick]);
      for (int l = 0; l < kNumLabels; ++l) counts[l] += train[pick].labels[l];
    }
  }
  return out;
}

// ---- splitting ---------------------------------------------------------------

DatasetSplit split_dataset(const std::vector<LabeledExample>& examples,
                           double train_frac, double val_frac, double test_frac,
                           std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
      std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must be non-negative and sum to 1");
  }
  ClassCounts cc = class_counts(examples);
  // Stratify by each example's rarest label (ties to the lower index);
  // label-free examples form their own stratum.
  auto stratum_of = [&](const LabeledExample& ex) {
    int best = kNumLabels;
    long best_count = -1;
    for (int c = 0; c < kNumLabels; ++c) {
      if (!ex.labels[c]) continue;
      if (best == kNumLabels || cc.positives[c] < best_count) {
        best = c;
        best_count = cc.positives[c];
      }
    }
    return best;
  };
  std::array<std::vector<std::size_t>, kNumLabels + 1> strata;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    strata[stratum_of(examples[i])].push_back(i);
  }
  Rng rng(seed);
  DatasetSplit split;
  for (auto& stratum : strata) {
    rng.shuffle(stratum);
    const std::size_t n = stratum.size();
    const auto n_test = static_cast<std::size_t>(test_frac * n);
    const auto n_val = static_cast<std::size_t>(val_frac * n);
    for (std::size_t i = 0; i < n; ++i) {
      const LabeledExample& ex = examples[stratum[i]];
      if (i < n_test) split.test.push_back(ex);
      else if (i < n_test + n_val) split.validation.push_back(ex);
      else split.train.push_back(ex);
    }
  }
  return split;
}

std::vector<Fold> kfold_partition(const std::vector<LabeledExample>& examples,
                                  int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2");
  if (static_cast<std::size_t>(k) > examples.size()) {
    throw ConfigError("kfold: k = " + std::to_string(k) + " exceeds " +
                      std::to_string(examples.size()) + " examples");
  }
  std::vector<std::size_t> idx(examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);

  const std::size_t base = examples.size() / static_cast<std::size_t>(k);
  const std::size_t extra = examples.size() % static_cast<std::size_t>(k);
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const bool held = i >= pos && i < pos + size;
      const LabeledExample& ex = examples[idx[i]];
      if (held) folds[f].held_out.push_back(ex);
      else folds[f].train.push_back(ex);
    }
    pos += size;
  }
  return folds;
}

}  // namespace multitox
