#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "multitox/errors.hpp"
#include "multitox/optim.hpp"
#include "multitox/rng.hpp"

using namespace multitox;

namespace {

ParamRegistry scalar_param(double theta) {
  ParamRegistry reg;
  reg.add("theta", Tensor::from_values({1}, {theta}));
  return reg;
}

void set_grads(ParamRegistry& reg, const std::vector<double>& g) {
  auto& grad = reg.entries()[0].tensor.grad();
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = g[i];
}

// Independent scalar reference of the update rule, written out step by step.
struct ScalarAdamWRef {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, lambda = 0.0;
  double m = 0.0, v = 0.0;
  long t = 0;

  double step(double theta, double g, double lr) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    return theta - lr * (mhat / (std::sqrt(vhat) + eps) + lambda * theta);
  }
};

}  // namespace

TEST_CASE("clip_global_norm rescales exactly to the threshold") {
  ParamRegistry reg;
  reg.add("w", Tensor::from_values({2, 2}, {1, 1, 1, 1}));
  set_grads(reg, {1, 1, 1, 1});  // norm = 2
  double factor = clip_global_norm(reg, 1.0);
  CHECK(factor == doctest::Approx(0.5));
  double sq = 0.0;
  for (double g : reg.entries()[0].tensor.grad_view()) sq += g * g;
  CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("clip_global_norm leaves small and zero grads alone") {
  ParamRegistry reg;
  reg.add("w", Tensor::from_values({4}, {0, 0, 0, 0}));
  set_grads(reg, {0.3, 0.2, 0.1, 0.2});  // norm ~ 0.42
  CHECK(clip_global_norm(reg, 1.0) == 1.0);
  CHECK(reg.entries()[0].tensor.grad_view()[0] == 0.3);

  set_grads(reg, {0, 0, 0, 0});
  CHECK(clip_global_norm(reg, 1.0) == 1.0);
}

TEST_CASE("clip spans multiple parameters") {
  ParamRegistry reg;
  reg.add("a", Tensor::from_values({2}, {0, 0}));
  reg.add("b", Tensor::from_values({2}, {0, 0}));
  reg.at("a").tensor.grad() = {3, 0};
  reg.at("b").tensor.grad() = {0, 4};  // global norm 5
  double factor = clip_global_norm(reg, 1.0);
  CHECK(factor == doctest::Approx(0.2));
  CHECK(reg.at("a").tensor.grad_view()[0] == doctest::Approx(0.6));
  CHECK(reg.at("b").tensor.grad_view()[1] == doctest::Approx(0.8));
}

TEST_CASE("adamw first step on a unit scalar") {
  ParamRegistry reg = scalar_param(1.0);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamW opt(reg, cfg);
  set_grads(reg, {1.0});
  opt.step(reg, cfg.lr);
  // mhat = vhat = 1 at t=1, so theta' = 1 - lr / (1 + eps).
  const double expect = 1.0 - 0.1 / (1.0 + 1e-8);
  CHECK(reg.entries()[0].tensor.values()[0] ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adamw two-step trace matches the scalar reference to 1e-12") {
  ParamRegistry reg = scalar_param(0.5);
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.01;
  AdamW opt(reg, cfg);

  ScalarAdamWRef ref;
  ref.lambda = 0.01;
  double theta = 0.5;

  for (double g : {0.7, 0.7}) {
    set_grads(reg, {g});
    opt.step(reg, cfg.lr);
    theta = ref.step(theta, g, cfg.lr);
  }
  CHECK(std::fabs(reg.entries()[0].tensor.values()[0] - theta) < 1e-12);
}

TEST_CASE("decoupled decay shrinks parameters by (1 - lr*lambda) per step") {
  ParamRegistry reg = scalar_param(2.0);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(reg, cfg);
  double expect = 2.0;
  for (int i = 0; i < 3; ++i) {
    set_grads(reg, {0.0});
    opt.step(reg, cfg.lr);
    expect *= 1.0 - cfg.lr * cfg.weight_decay;
    CHECK(reg.entries()[0].tensor.values()[0] ==
          doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("adamw with zero decay equals plain adam bitwise") {
  Rng rng(314);
  ParamRegistry reg;
  reg.add("w", Tensor::from_values({8}, std::vector<double>(8, 0.25)));
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  AdamW opt(reg, cfg);

  std::vector<double> adam_theta(8, 0.25), m(8, 0.0), v(8, 0.0);
  for (int t = 1; t <= 20; ++t) {
    std::vector<double> g(8);
    for (auto& x : g) x = rng.next_normal();
    set_grads(reg, g);
    opt.step(reg, cfg.lr);
    for (int i = 0; i < 8; ++i) {
      m[i] = 0.9 * m[i] + (1.0 - 0.9) * g[i];
      v[i] = 0.999 * v[i] + (1.0 - 0.999) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(0.9, t));
      const double vhat = v[i] / (1.0 - std::pow(0.999, t));
      adam_theta[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + 1e-8));
    }
  }
  for (int i = 0; i < 8; ++i) {
    CHECK(reg.entries()[0].tensor.values()[i] == adam_theta[i]);
  }
}

TEST_CASE("first-step update magnitude is bounded by the learning rate") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const double theta0 = rng.next_normal();
    ParamRegistry reg = scalar_param(theta0);
    AdamWConfig cfg;
    cfg.lr = 0.07;
    cfg.weight_decay = 0.0;
    AdamW opt(reg, cfg);
    set_grads(reg, {rng.next_normal() * 10.0});
    opt.step(reg, cfg.lr);
    CHECK(std::fabs(reg.entries()[0].tensor.values()[0] - theta0) <=
          cfg.lr + 1e-12);
  }
}

TEST_CASE("decay filter skips entries registered without decay") {
  ParamRegistry reg;
  reg.add("w", Tensor::from_values({1}, {1.0}), true);
  reg.add("b", Tensor::from_values({1}, {1.0}), false);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(reg, cfg);
  reg.at("w").tensor.grad() = {0.0};
  reg.at("b").tensor.grad() = {0.0};
  opt.step(reg, cfg.lr);
  CHECK(reg.at("w").tensor.values()[0] == doctest::Approx(0.95));
  CHECK(reg.at("b").tensor.values()[0] == doctest::Approx(1.0));

  // Disabling the filter decays everything.
  ParamRegistry reg2;
  reg2.add("b", Tensor::from_values({1}, {1.0}), false);
  cfg.decay_filter = false;
  AdamW opt2(reg2, cfg);
  reg2.at("b").tensor.grad() = {0.0};
  opt2.step(reg2, cfg.lr);
  CHECK(reg2.at("b").tensor.values()[0] == doctest::Approx(0.95));
}

TEST_CASE("frozen parameters are not updated") {
  ParamRegistry reg;
  reg.add("w", Tensor::from_values({1}, {1.0}));
  reg.at("w").frozen = true;
  AdamWConfig cfg;
  cfg.lr = 0.1;
  AdamW opt(reg, cfg);
  reg.at("w").tensor.grad() = {5.0};
  opt.step(reg, cfg.lr);
  CHECK(reg.at("w").tensor.values()[0] == 1.0);
}

TEST_CASE("schedule hits 0, base_lr, 0 at the three anchors") {
  Schedule s;
  s.total_steps = 100;
  s.warmup_ratio = 0.1;
  CHECK(s.warmup_steps() == 10);
  CHECK(schedule_lr(0, s, 2.0) == 0.0);
  CHECK(schedule_lr(10, s, 2.0) == doctest::Approx(2.0));
  CHECK(schedule_lr(100, s, 2.0) == 0.0);
  CHECK(schedule_lr(55, s, 2.0) == doctest::Approx(2.0 * 45.0 / 90.0));
}

TEST_CASE("schedule clamps past the end with a warning") {
  Schedule s;
  s.total_steps = 10;
  long before = warning_count();
  CHECK(schedule_lr(11, s, 1.0) == 0.0);
  CHECK(warning_count() > before);
}

TEST_CASE("schedule multiplier is piecewise linear within [0,1]") {
  Schedule s;
  s.total_steps = 40;
  s.warmup_ratio = 0.25;
  const long w = s.warmup_steps();
  for (long step = 0; step <= 40; ++step) {
    const double m = s.multiplier(step);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    // Constant slope inside each segment.
    if (step + 2 <= w || (step >= w && step + 2 <= 40)) {
      const double d1 = s.multiplier(step + 1) - s.multiplier(step);
      const double d2 = s.multiplier(step + 2) - s.multiplier(step + 1);
      CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));
    }
  }
  // Continuous at the warmup boundary.
  CHECK(s.multiplier(w) == doctest::Approx(1.0));
}

TEST_CASE("config validation") {
  ParamRegistry reg = scalar_param(0.0);
  AdamWConfig bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(AdamW(reg, bad), ConfigError);
  CHECK_THROWS_AS(clip_global_norm(reg, 0.0), ConfigError);
  Schedule s;
  s.total_steps = 0;
  CHECK_THROWS_AS(s.multiplier(0), ConfigError);
}
