#include "multitox/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "multitox/errors.hpp"

namespace multitox {

namespace {

void require_binary_matrix(const LabelMatrix& m, const char* who) {
  for (const auto& row : m) {
    if (row.size() != m[0].size()) {
      throw ShapeError(std::string(who) + ": ragged matrix");
    }
    for (int v : row) {
      if (v != 0 && v != 1) {
        throw ConfigError(std::string(who) + ": non-binary cell " +
                          std::to_string(v));
      }
    }
  }
}

void require_same(const LabelMatrix& a, const LabelMatrix& b,
                  const char* who) {
  if (a.size() != b.size() || (!a.empty() && a[0].size() != b[0].size())) {
    throw ShapeError(std::string(who) + ": shape mismatch: " +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + " rows");
  }
  require_binary_matrix(a, who);
  require_binary_matrix(b, who);
}

struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }
};

Confusion pooled_confusion(const LabelMatrix& y_true,
                           const LabelMatrix& y_pred) {
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    for (std::size_t k = 0; k < y_true[i].size(); ++k) {
      if (y_true[i][k] == 1 && y_pred[i][k] == 1) ++c.tp;
      else if (y_true[i][k] == 0 && y_pred[i][k] == 1) ++c.fp;
      else if (y_true[i][k] == 1 && y_pred[i][k] == 0) ++c.fn;
      else ++c.tn;
    }
  }
  return c;
}

Confusion label_confusion(const LabelMatrix& y_true, const LabelMatrix& y_pred,
                          std::size_t k) {
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i][k] == 1 && y_pred[i][k] == 1) ++c.tp;
    else if (y_true[i][k] == 0 && y_pred[i][k] == 1) ++c.fp;
    else if (y_true[i][k] == 1 && y_pred[i][k] == 0) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double safe_ratio(long num, long den, const char* what) {
  if (den == 0) {
    log_warning(std::string(what) + ": zero denominator, reporting 0");
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

Prf1 prf1_from(const Confusion& c) {
  Prf1 out;
  out.precision = safe_ratio(c.tp, c.tp + c.fp, "precision");
  out.recall = safe_ratio(c.tp, c.tp + c.fn, "recall");
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

double mcc_from(const Confusion& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  const double denom_sq = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom_sq == 0.0) {
    log_warning("mcc: zero-variance marginal, reporting 0");
    return 0.0;
  }
  return (tp * tn - fp * fn) / std::sqrt(denom_sq);
}

double kappa_from(const Confusion& c) {
  const double n = static_cast<double>(c.total());
  if (n == 0.0) return 0.0;
  const double po = static_cast<double>(c.tp + c.tn) / n;
  const double pe =
      (static_cast<double>(c.tp + c.fp) * static_cast<double>(c.tp + c.fn) +
       static_cast<double>(c.fn + c.tn) * static_cast<double>(c.fp + c.tn)) /
      (n * n);
  if (pe == 1.0) {
    log_warning("kappa: zero-variance marginals, reporting 0");
    return 0.0;
  }
  return (po - pe) / (1.0 - pe);
}

}  // namespace

double hamming_loss(const LabelMatrix& y_true, const LabelMatrix& y_pred) {
  require_same(y_true, y_pred, "hamming_loss");
  if (y_true.empty()) return 0.0;
  long mismatched = 0;
  long cells = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    for (std::size_t k = 0; k < y_true[i].size(); ++k) {
      mismatched += y_true[i][k] != y_pred[i][k] ? 1 : 0;
      ++cells;
    }
  }
  return static_cast<double>(mismatched) / static_cast<double>(cells);
}

double multilabel_accuracy(const LabelMatrix& y_true, const LabelMatrix& y_pred,
                           AccuracyMode mode) {
  require_same(y_true, y_pred, "multilabel_accuracy");
  if (y_true.empty()) return 0.0;
  if (mode == AccuracyMode::kLabelwise) {
    return 1.0 - hamming_loss(y_true, y_pred);
  }
  long exact = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    exact += y_true[i] == y_pred[i] ? 1 : 0;
  }
  return static_cast<double>(exact) / static_cast<double>(y_true.size());
}

Prf1 prf1(const LabelMatrix& y_true, const LabelMatrix& y_pred,
          Averaging averaging) {
  require_same(y_true, y_pred, "prf1");
  if (y_true.empty()) return {};
  const std::size_t k_labels = y_true[0].size();
  if (averaging == Averaging::kMicro) {
    return prf1_from(pooled_confusion(y_true, y_pred));
  }
  Prf1 acc;
  for (std::size_t k = 0; k < k_labels; ++k) {
    Prf1 lk = prf1_from(label_confusion(y_true, y_pred, k));
    acc.precision += lk.precision;
    acc.recall += lk.recall;
    acc.f1 += lk.f1;
  }
  const double kd = static_cast<double>(k_labels);
  return {acc.precision / kd, acc.recall / kd, acc.f1 / kd};
}

double mcc(const LabelMatrix& y_true, const LabelMatrix& y_pred) {
  require_same(y_true, y_pred, "mcc");
  return mcc_from(pooled_confusion(y_true, y_pred));
}

double kappa(const LabelMatrix& y_true, const LabelMatrix& y_pred) {
  require_same(y_true, y_pred, "kappa");
  return kappa_from(pooled_confusion(y_true, y_pred));
}

RocResult roc_auc(const LabelMatrix& y_true, const ScoreMatrix& scores) {
  require_binary_matrix(y_true, "roc_auc");
  if (y_true.size() != scores.size() ||
      (!y_true.empty() && y_true[0].size() != scores[0].size())) {
    throw ShapeError("roc_auc: labels and scores disagree in shape");
  }
  for (const auto& row : scores) {
    for (double s : row) {
      if (s < 0.0 || s > 1.0) {
        throw ConfigError("roc_auc: score " + std::to_string(s) +
                          " outside [0, 1]");
      }
    }
  }
  RocResult out;
  if (y_true.empty()) return out;
  const std::size_t k_labels = y_true[0].size();
  double auc_sum = 0.0;
  int defined = 0;
  for (std::size_t k = 0; k < k_labels; ++k) {
    RocCurve curve;
    long pos = 0, neg = 0;
    std::vector<std::pair<double, int>> ranked;  // (score, label)
    ranked.reserve(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      ranked.emplace_back(scores[i][k], y_true[i][k]);
      pos += y_true[i][k];
      neg += 1 - y_true[i][k];
    }
    if (pos == 0 || neg == 0) {
      log_warning("roc_auc: label " + std::to_string(k) +
                  " has a single class, excluded from macro AUC");
      curve.defined = false;
      out.per_label.push_back(std::move(curve));
      continue;
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;
    });
    curve.points.emplace_back(0.0, 0.0);
    long tp = 0, fp = 0;
    double area = 0.0;
    std::size_t i = 0;
    while (i < ranked.size()) {
      // Group equal scores into one threshold step.
      std::size_t j = i;
      long dtp = 0, dfp = 0;
      while (j < ranked.size() && ranked[j].first == ranked[i].first) {
        dtp += ranked[j].second;
        dfp += 1 - ranked[j].second;
        ++j;
      }
      const double fpr0 = static_cast<double>(fp) / static_cast<double>(neg);
      const double tpr0 = static_cast<double>(tp) / static_cast<double>(pos);
      tp += dtp;
      fp += dfp;
      const double fpr1 = static_cast<double>(fp) / static_cast<double>(neg);
      const double tpr1 = static_cast<double>(tp) / static_cast<double>(pos);
      area += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
      curve.points.emplace_back(fpr1, tpr1);
      i = j;
    }
    curve.area = area;
    curve.defined = true;
    auc_sum += area;
    ++defined;
    out.per_label.push_back(std::move(curve));
  }
  out.macro_auc = defined > 0 ? auc_sum / defined : 0.0;
  return out;
}

MetricsReport compute_report(const LabelMatrix& y_true,
                             const LabelMatrix& y_pred,
                             const ScoreMatrix& scores) {
  MetricsReport r;
  r.n_examples = static_cast<long>(y_true.size());
  r.hamming = hamming_loss(y_true, y_pred);
  r.accuracy = 1.0 - r.hamming;
  r.subset_accuracy =
      multilabel_accuracy(y_true, y_pred, AccuracyMode::kSubset);
  Prf1 macro = prf1(y_true, y_pred, Averaging::kMacro);
  r.precision = macro.precision;
  r.recall = macro.recall;
  r.f1 = macro.f1;
  Prf1 micro = prf1(y_true, y_pred, Averaging::kMicro);
  r.precision_micro = micro.precision;
  r.recall_micro = micro.recall;
  r.f1_micro = micro.f1;
  r.mcc = mcc(y_true, y_pred);
  r.kappa = kappa(y_true, y_pred);
  RocResult roc = roc_auc(y_true, scores);
  r.auc = roc.macro_auc;

  const std::size_t k_labels = y_true.empty() ? 0 : y_true[0].size();
  for (std::size_t k = 0; k < k_labels; ++k) {
    LabelMatrix col_t(y_true.size()), col_p(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      col_t[i] = {y_true[i][k]};
      col_p[i] = {y_pred[i][k]};
    }
    PerLabelMetrics pl;
    pl.hamming = hamming_loss(col_t, col_p);
    pl.accuracy = 1.0 - pl.hamming;
    Confusion c = label_confusion(y_true, y_pred, k);
    Prf1 pr = prf1_from(c);
    pl.precision = pr.precision;
    pl.recall = pr.recall;
    pl.f1 = pr.f1;
    pl.mcc = mcc_from(c);
    pl.kappa = kappa_from(c);
    pl.auc = roc.per_label[k].defined
                 ? roc.per_label[k].area
                 : std::numeric_limits<double>::quiet_NaN();
    r.per_label.push_back(pl);
  }
  return r;
}

CrossvalSummary crossval_aggregate(const std::vector<MetricsReport>& folds) {
  if (folds.size() < 2) {
    throw ConfigError("crossval_aggregate: need at least 2 folds");
  }
  for (const MetricsReport& f : folds) {
    if (f.averaging_mode != folds[0].averaging_mode) {
      throw ConfigError("crossval_aggregate: averaging modes differ");
    }
  }
  CrossvalSummary out;
  out.n_folds = static_cast<int>(folds.size());
  const double n = static_cast<double>(folds.size());

  auto fields = [](MetricsReport& r) {
    return std::vector<double*>{
        &r.accuracy, &r.subset_accuracy, &r.hamming,
        &r.precision, &r.recall, &r.f1,
        &r.precision_micro, &r.recall_micro, &r.f1_micro,
        &r.mcc, &r.kappa, &r.auc};
  };
  auto cfields = [](const MetricsReport& r) {
    return std::vector<const double*>{
        &r.accuracy, &r.subset_accuracy, &r.hamming,
        &r.precision, &r.recall, &r.f1,
        &r.precision_micro, &r.recall_micro, &r.f1_micro,
        &r.mcc, &r.kappa, &r.auc};
  };

  auto mean_ptrs = fields(out.mean);
  auto std_ptrs = fields(out.stddev);
  for (std::size_t m = 0; m < mean_ptrs.size(); ++m) {
    double sum = 0.0;
    for (const MetricsReport& f : folds) sum += *cfields(f)[m];
    const double mean = sum / n;
    double sq = 0.0;
    for (const MetricsReport& f : folds) {
      const double d = *cfields(f)[m] - mean;
      sq += d * d;
    }
    *mean_ptrs[m] = mean;
    *std_ptrs[m] = std::sqrt(sq / (n - 1.0));  // sample std over folds
  }
  for (const MetricsReport& f : folds) out.mean.n_examples += f.n_examples;
  out.mean.averaging_mode = folds[0].averaging_mode;
  return out;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_metrics_report(const std::string& path, const MetricsReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics report: " + path);
  out << "n_examples " << r.n_examples << "\n";
  out << "averaging " << r.averaging_mode << "\n";
  out << "accuracy_labelwise " << fmt(r.accuracy) << "\n";
  out << "accuracy_subset " << fmt(r.subset_accuracy) << "\n";
  out << "hamming_loss " << fmt(r.hamming) << "\n";
  out << "precision_macro " << fmt(r.precision) << "\n";
  out << "recall_macro " << fmt(r.recall) << "\n";
  out << "f1_macro " << fmt(r.f1) << "\n";
  out << "precision_micro " << fmt(r.precision_micro) << "\n";
  out << "recall_micro " << fmt(r.recall_micro) << "\n";
  out << "f1_micro " << fmt(r.f1_micro) << "\n";
  out << "mcc " << fmt(r.mcc) << "\n";
  out << "kappa " << fmt(r.kappa) << "\n";
  out << "auc_macro " << fmt(r.auc) << "\n";
  out << "\nlabel accuracy hamming precision recall f1 mcc kappa auc\n";
  for (std::size_t k = 0; k < r.per_label.size(); ++k) {
    const PerLabelMetrics& pl = r.per_label[k];
    out << "label" << k << " " << fmt(pl.accuracy) << " " << fmt(pl.hamming)
        << " " << fmt(pl.precision) << " " << fmt(pl.recall) << " "
        << fmt(pl.f1) << " " << fmt(pl.mcc) << " " << fmt(pl.kappa) << " "
        << fmt(pl.auc) << "\n";
  }
}

void write_roc_files(const std::string& dir, const RocResult& roc,
                     const std::vector<std::string>& label_names) {
  for (std::size_t k = 0; k < roc.per_label.size(); ++k) {
    const std::string name =
        k < label_names.size() ? label_names[k] : "label" + std::to_string(k);
    std::ofstream out(dir + "/roc_" + name + ".csv", std::ios::binary);
    if (!out) throw IoError("cannot write ROC file in " + dir);
    out << "fpr,tpr\n";
    for (const auto& [fpr, tpr] : roc.per_label[k].points) {
      out << fmt(fpr) << "," << fmt(tpr) << "\n";
    }
  }
}

}  // namespace multitox
