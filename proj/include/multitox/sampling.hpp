#ifndef MULTITOX_SAMPLING_HPP
#define MULTITOX_SAMPLING_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace multitox {

// Fixed label tuple order used in every vector and file.
inline constexpr int kNumLabels = 5;
extern const std::array<const char*, kNumLabels> kLabelNames;
int label_index(const std::string& name);  // -1 when unknown

struct LabeledExample {
  std::string text;
  std::array<int, kNumLabels> labels{};  // each 0 or 1

  bool has_any_label() const;
};

enum class Provenance { kOriginal, kUndersampled, kOversampled };
const char* provenance_name(Provenance p);
Provenance provenance_from(const std::string& name);

struct LoadReport {
  long dropped_duplicates = 0;
  long dropped_empty = 0;
  Provenance provenance = Provenance::kOriginal;
};

// CSV with header text,bully,sexual,religious,threat,spam; the text field is
// quoted when it contains commas or quotes.  Resampled files carry a leading
// "# provenance: <tag>" line.
std::vector<LabeledExample> load_dataset(const std::string& path,
                                         LoadReport* report = nullptr);
void save_dataset(const std::string& path,
                  const std::vector<LabeledExample>& examples,
                  Provenance provenance = Provenance::kOriginal);

struct ClassCounts {
  std::array<long, kNumLabels> positives{};

  long min_count() const;
  long max_count() const;
};

ClassCounts class_counts(const std::vector<LabeledExample>& examples);

// Seeded-random removal of examples whose set labels are all strictly above
// min(n_c), until no further removal is legal.  Stops at the feasibility
// floor imposed by label co-occurrence; never drops a label below the
// target or to zero.
std::vector<LabeledExample> undersample(
    const std::vector<LabeledExample>& train, std::uint64_t seed);

// Seeded-random duplication, processing labels in ascending frequency, until
// every label count reaches max(n_c).  Duplicates keep their full label
// tuple, so majority counts can overshoot.
std::vector<LabeledExample> oversample(const std::vector<LabeledExample>& train,
                                       std::uint64_t seed);

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
  Provenance train_provenance = Provenance::kOriginal;
};

// Seeded split stratified by each example's rarest label.
DatasetSplit split_dataset(const std::vector<LabeledExample>& examples,
                           double train_frac, double val_frac, double test_frac,
                           std::uint64_t seed);

struct Fold {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> held_out;
};

// Seeded shuffle into k near-equal disjoint folds (sizes differ by <= 1).
std::vector<Fold> kfold_partition(const std::vector<LabeledExample>& examples,
                                  int k, std::uint64_t seed);

}  // namespace multitox

#endif
