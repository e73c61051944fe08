#include "multitox/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "multitox/errors.hpp"

namespace multitox {

std::vector<PerturbationSample> perturb_samples(
    const std::vector<std::string>& words, int n, Rng& rng) {
  if (words.empty()) {
    throw ConfigError("perturb_samples: no words to perturb");
  }
  if (n < 10) throw ConfigError("perturb_samples: n must be >= 10");
  const std::size_t t = words.size();

  auto render = [&](const std::vector<int>& keep) {
    std::string s;
    for (std::size_t j = 0; j < t; ++j) {
      if (!keep[j]) continue;
      if (!s.empty()) s += ' ';
      s += words[j];
    }
    return s;
  };

  std::vector<PerturbationSample> out;
  if (t <= 8 && (1u << t) <= 256u) {
    // Exhaustive enumeration, all-ones first.
    const std::uint32_t full = (1u << t) - 1u;
    for (std::uint32_t m = full + 1; m-- > 0;) {
      std::vector<int> keep(t);
      for (std::size_t j = 0; j < t; ++j) keep[j] = (m >> j) & 1u;
      out.push_back({keep, render(keep)});
    }
    return out;
  }

  out.push_back({std::vector<int>(t, 1), render(std::vector<int>(t, 1))});
  for (int i = 1; i < n; ++i) {
    std::vector<int> keep(t);
    for (std::size_t j = 0; j < t; ++j) {
      keep[j] = rng.next_bernoulli(0.5) ? 0 : 1;
    }
    out.push_back({keep, render(keep)});
  }
  return out;
}

SurrogateFit fit_surrogate(const std::vector<std::vector<int>>& masks,
                           const std::vector<double>& probabilities,
                           double kernel_width) {
  if (masks.size() != probabilities.size()) {
    throw ShapeError("fit_surrogate: mask/probability count mismatch");
  }
  if (masks.size() < 2) {
    throw ConfigError("fit_surrogate: need at least 2 samples");
  }
  bool distinct = false;
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (masks[i] != masks[0]) distinct = true;
  }
  if (!distinct) {
    throw ConfigError("fit_surrogate: all masks identical");
  }
  if (kernel_width <= 0.0) {
    throw ConfigError("fit_surrogate: kernel width must be > 0");
  }

  const std::size_t t = masks[0].size();
  const std::size_t dim = t + 1;  // intercept + one coefficient per word
  constexpr double kRidge = 1e-6;

  // Normal equations A beta = b with A = X^T W X + ridge I.
  std::vector<double> a(dim * dim, 0.0);
  std::vector<double> b(dim, 0.0);
  double weight_sum = 0.0, weighted_y = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].size() != t) {
      throw ShapeError("fit_surrogate: ragged masks");
    }
    long dropped = 0;
    for (int bit : masks[i]) dropped += bit ? 0 : 1;
    const double d = static_cast<double>(dropped);
    const double w = std::exp(-(d * d) / (kernel_width * kernel_width));
    std::vector<double> x(dim, 1.0);
    for (std::size_t j = 0; j < t; ++j) x[j + 1] = masks[i][j];
    for (std::size_t r = 0; r < dim; ++r) {
      b[r] += w * x[r] * probabilities[i];
      for (std::size_t c = 0; c < dim; ++c) {
        a[r * dim + c] += w * x[r] * x[c];
      }
    }
    weight_sum += w;
    weighted_y += w * probabilities[i];
  }
  for (std::size_t r = 0; r < dim; ++r) a[r * dim + r] += kRidge;

  // Gaussian elimination with partial pivoting.
  std::vector<double> beta = b;
  for (std::size_t col = 0; col < dim; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < dim; ++r) {
      if (std::fabs(a[r * dim + col]) > std::fabs(a[pivot * dim + col])) {
        pivot = r;
      }
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < dim; ++c) {
        std::swap(a[col * dim + c], a[pivot * dim + c]);
      }
      std::swap(beta[col], beta[pivot]);
    }
    const double diag = a[col * dim + col];
    for (std::size_t r = col + 1; r < dim; ++r) {
      const double f = a[r * dim + col] / diag;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < dim; ++c) {
        a[r * dim + c] -= f * a[col * dim + c];
      }
      beta[r] -= f * beta[col];
    }
  }
  for (std::size_t col = dim; col-- > 0;) {
    for (std::size_t c = col + 1; c < dim; ++c) {
      beta[col] -= a[col * dim + c] * beta[c];
    }
    beta[col] /= a[col * dim + col];
  }

  SurrogateFit fit;
  fit.intercept = beta[0];
  fit.coefficients.assign(beta.begin() + 1, beta.end());

  // Weighted R^2 of the fit.
  const double y_bar = weighted_y / weight_sum;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    long dropped = 0;
    for (int bit : masks[i]) dropped += bit ? 0 : 1;
    const double d = static_cast<double>(dropped);
    const double w = std::exp(-(d * d) / (kernel_width * kernel_width));
    double pred = fit.intercept;
    for (std::size_t j = 0; j < t; ++j) {
      pred += fit.coefficients[j] * masks[i][j];
    }
    ss_res += w * (probabilities[i] - pred) * (probabilities[i] - pred);
    ss_tot += w * (probabilities[i] - y_bar) * (probabilities[i] - y_bar);
  }
  fit.score = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

std::vector<Explanation> explain_comment(
    const std::string& text, const HybridModel& model, const Vocabulary& vocab,
    const CleaningConfig& cleaning, const std::vector<int>& label_indices,
    int n, std::uint64_t seed) {
  for (int k : label_indices) {
    if (k < 0 || k >= model.config().n_labels) {
      throw ConfigError("explain: label index " + std::to_string(k) +
                        " out of range");
    }
  }
  if (label_indices.empty()) return {};

  const std::string cleaned = clean(text, cleaning);
  const std::vector<std::string> words = split_words(cleaned);
  if (words.empty()) {
    throw ConfigError(
        "explain: text is empty after cleaning; supply a comment with "
        "in-vocabulary words");
  }

  Rng rng = substream(seed, "lime");
  std::vector<PerturbationSample> samples = perturb_samples(words, n, rng);

  const int max_len = model.config().encoder.max_len;
  std::vector<TokenizedSequence> batch;
  batch.reserve(samples.size());
  for (const PerturbationSample& s : samples) {
    batch.push_back(encode(tokenize(s.text, vocab), vocab, max_len));
  }
  Rng fwd(0);  // eval mode consumes no randomness
  PredictionBatch preds = predict(model.forward(batch, false, fwd));

  std::vector<std::vector<int>> masks;
  masks.reserve(samples.size());
  for (const PerturbationSample& s : samples) masks.push_back(s.keep);

  const double kernel_width =
      0.75 * std::sqrt(static_cast<double>(words.size()));

  std::vector<Explanation> out;
  for (int k : label_indices) {
    std::vector<double> probs(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      probs[i] = preds.probabilities[i][static_cast<std::size_t>(k)];
    }
    SurrogateFit fit = fit_surrogate(masks, probs, kernel_width);
    Explanation ex;
    ex.label = k < kNumLabels ? kLabelNames[k] : "label" + std::to_string(k);
    ex.base_probability = probs[0];
    ex.n_perturbations = static_cast<int>(samples.size());
    ex.fit_score = fit.score;
    for (std::size_t j = 0; j < words.size(); ++j) {
      ex.weighted_tokens.emplace_back(words[j], fit.coefficients[j]);
    }
    std::stable_sort(ex.weighted_tokens.begin(), ex.weighted_tokens.end(),
                     [](const auto& a, const auto& b) {
                       return std::fabs(a.second) > std::fabs(b.second);
                     });
    out.push_back(std::move(ex));
  }
  return out;
}

void write_explanations(const std::string& dir, const std::string& text,
                        const std::vector<Explanation>& explanations) {
  std::ofstream summary(dir + "/explanation.txt", std::ios::binary);
  if (!summary) throw IoError("cannot write explanation in " + dir);
  summary << "text " << text << "\n\n";
  char buf[64];
  for (const Explanation& ex : explanations) {
    std::snprintf(buf, sizeof(buf), "%.6f", ex.base_probability);
    summary << "label " << ex.label << "\n";
    summary << "probability " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.6f", ex.fit_score);
    summary << "fit_score " << buf << "\n";
    summary << "perturbations " << ex.n_perturbations << "\n";
    for (const auto& [token, weight] : ex.weighted_tokens) {
      std::snprintf(buf, sizeof(buf), "%+.6f", weight);
      summary << "  " << buf << " " << token << "\n";
    }
    summary << "\n";

    std::ofstream csv(dir + "/explain_" + ex.label + ".csv",
                      std::ios::binary);
    if (!csv) throw IoError("cannot write explanation CSV in " + dir);
    csv << "token,weight\n";
    for (const auto& [token, weight] : ex.weighted_tokens) {
      std::snprintf(buf, sizeof(buf), "%.9g", weight);
      csv << token << "," << buf << "\n";
    }
  }
}

}  // namespace multitox
