#ifndef MULTITOX_EXPLAIN_HPP
#define MULTITOX_EXPLAIN_HPP

#include <string>
#include <utility>
#include <vector>

#include "multitox/model.hpp"

namespace multitox {

struct Explanation {
  std::string label;
  double base_probability = 0.0;  // model output on the unperturbed text
  // (token, importance weight), sorted by |weight| descending.
  std::vector<std::pair<std::string, double>> weighted_tokens;
  int n_perturbations = 0;
  double fit_score = 0.0;  // weighted R^2 of the surrogate
};

struct PerturbationSample {
  std::vector<int> keep;  // one bit per word; sample 0 is all ones
  std::string text;       // kept words joined by spaces
};

// Each sample drops each word independently with probability 0.5; the
// all-ones sample always comes first.  When 2^n_words <= 256 the full mask
// set is enumerated instead of sampled.
std::vector<PerturbationSample> perturb_samples(
    const std::vector<std::string>& words, int n, Rng& rng);

struct SurrogateFit {
  std::vector<double> coefficients;  // one per word
  double intercept = 0.0;
  double score = 0.0;
};

// Weighted least squares of probability against mask bits with kernel
// weights exp(-d^2 / width^2), d = hamming distance to the all-ones mask;
// solved by normal equations with a small ridge term.
SurrogateFit fit_surrogate(const std::vector<std::vector<int>>& masks,
                           const std::vector<double>& probabilities,
                           double kernel_width);

// One explanation per requested label index, all fitted on a single shared
// perturbation set.  Perturbation operates on whole words of the cleaned
// text so weights line up with human-readable tokens.
std::vector<Explanation> explain_comment(
    const std::string& text, const HybridModel& model, const Vocabulary& vocab,
    const CleaningConfig& cleaning, const std::vector<int>& label_indices,
    int n, std::uint64_t seed);

// Per-label text block plus one token/weight CSV per label.
void write_explanations(const std::string& dir, const std::string& text,
                        const std::vector<Explanation>& explanations);

}  // namespace multitox

#endif
