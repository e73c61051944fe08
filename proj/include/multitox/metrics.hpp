#ifndef MULTITOX_METRICS_HPP
#define MULTITOX_METRICS_HPP

#include <string>
#include <vector>

namespace multitox {

// Rows are examples, columns are labels; cells are 0/1 (scores in [0,1]).
using LabelMatrix = std::vector<std::vector<int>>;
using ScoreMatrix = std::vector<std::vector<double>>;

enum class AccuracyMode { kSubset, kLabelwise };
enum class Averaging { kMicro, kMacro };

double hamming_loss(const LabelMatrix& y_true, const LabelMatrix& y_pred);
double multilabel_accuracy(const LabelMatrix& y_true, const LabelMatrix& y_pred,
                           AccuracyMode mode);

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf1 prf1(const LabelMatrix& y_true, const LabelMatrix& y_pred,
          Averaging averaging);

// Pooled over all N*K binary decisions.
double mcc(const LabelMatrix& y_true, const LabelMatrix& y_pred);
double kappa(const LabelMatrix& y_true, const LabelMatrix& y_pred);

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), monotone
  double area = 0.0;
  bool defined = false;  // false when the label has a single class
};

struct RocResult {
  std::vector<RocCurve> per_label;
  double macro_auc = 0.0;  // unweighted mean over defined labels
};

RocResult roc_auc(const LabelMatrix& y_true, const ScoreMatrix& scores);

struct PerLabelMetrics {
  double accuracy = 0.0;
  double hamming = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  double kappa = 0.0;
  double auc = 0.0;  // NaN when undefined
};

struct MetricsReport {
  // Headline accuracy is labelwise (= 1 - hamming); subset is alongside.
  double accuracy = 0.0;
  double subset_accuracy = 0.0;
  double hamming = 0.0;
  // Headline P/R/F1 are macro; micro emitted alongside.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double precision_micro = 0.0;
  double recall_micro = 0.0;
  double f1_micro = 0.0;
  double mcc = 0.0;
  double kappa = 0.0;
  double auc = 0.0;
  long n_examples = 0;
  std::string averaging_mode = "macro";
  std::vector<PerLabelMetrics> per_label;
};

// Full evaluation from hard predictions plus scores.
MetricsReport compute_report(const LabelMatrix& y_true,
                             const LabelMatrix& y_pred,
                             const ScoreMatrix& scores);

struct CrossvalSummary {
  MetricsReport mean;
  MetricsReport stddev;  // sample std over folds, per scalar metric
  int n_folds = 0;
};

CrossvalSummary crossval_aggregate(const std::vector<MetricsReport>& folds);

// Key-value block plus a per-label table.
void write_metrics_report(const std::string& path, const MetricsReport& r);
// One two-column (fpr tpr) file per label: <dir>/roc_<label>.csv.
void write_roc_files(const std::string& dir, const RocResult& roc,
                     const std::vector<std::string>& label_names);

}  // namespace multitox

#endif
