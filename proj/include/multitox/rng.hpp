#ifndef MULTITOX_RNG_HPP
#define MULTITOX_RNG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace multitox {

// Deterministic generator with hand-rolled distributions so that results are
// bit-identical across standard libraries and platforms.  All randomness in
// a run flows from one root seed through named sub-streams (split, sampling,
// init, dropout, lime, shuffle), so each component is independently
// reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double next_double();

  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t next_below(std::uint64_t n);

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi);

  // Standard normal via Box-Muller.
  double next_normal();

  // Normal(0, std) resampled until |x| <= 2*std.
  double next_trunc_normal(double stddev);

  bool next_bernoulli(double p);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives the seed for a named sub-stream of a root seed.
std::uint64_t substream_seed(std::uint64_t root_seed, const std::string& name);

// Convenience: Rng(substream_seed(root, name)), optionally salted by an
// index (fold number, epoch, trial).
Rng substream(std::uint64_t root_seed, const std::string& name,
              std::uint64_t salt = 0);

}  // namespace multitox

#endif
