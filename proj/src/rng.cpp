#include "multitox/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace multitox {

namespace {

// splitmix64; good enough mixing for seeding and for the generator itself.
std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : state_(seed) {
  // Warm up so that nearby seeds diverge immediately.
  next_u64();
  next_u64();
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::next_below: n must be > 0");
  // Rejection sampling to avoid modulo bias.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double Rng::next_normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = next_double();
  } while (u1 <= 0.0);
  u2 = next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double Rng::next_trunc_normal(double stddev) {
  for (;;) {
    double x = next_normal() * stddev;
    if (std::fabs(x) <= 2.0 * stddev) return x;
  }
}

bool Rng::next_bernoulli(double p) { return next_double() < p; }

std::uint64_t substream_seed(std::uint64_t root_seed, const std::string& name) {
  std::uint64_t x = root_seed ^ fnv1a64(name);
  return splitmix64(x);
}

Rng substream(std::uint64_t root_seed, const std::string& name,
              std::uint64_t salt) {
  std::uint64_t s = substream_seed(root_seed, name) ^
                    (0x9e3779b97f4a7c15ULL * (salt + 1));
  return Rng(s);
}

}  // namespace multitox
