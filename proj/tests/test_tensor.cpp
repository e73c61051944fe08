#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "multitox/errors.hpp"
#include "multitox/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace multitox;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                     double scale = 1.0) {
  std::vector<double> vals;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  vals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) vals.push_back(rng.next_normal() * scale);
  return Tensor::from_values(std::move(shape), std::move(vals));
}

}  // namespace

TEST_CASE("matmul identity and hand-evaluated product") {
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_values({2, 2}, {3, -1, 2, 7});
  Tensor prod = matmul(eye, a);
  CHECK(prod.values() == a.values());

  Tensor b = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor ones = Tensor::from_values({2, 1}, {1, 1});
  Tensor c = matmul(b, ones);
  CHECK(c.at(0, 0) == doctest::Approx(3.0));
  CHECK(c.at(1, 0) == doctest::Approx(7.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradient of sum(A*B) equals broadcast B^T") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  double err = gradcheck::max_rel_err({a, b}, [&]() {
    return sum_all(matmul(a, b));
  });
  CHECK(err < 1e-6);

  // dL/dA for L = sum(A*B) is the row-sum of B replicated in every row.
  a.zero_grad();
  b.zero_grad();
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum_all(matmul(a, b)));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      double expect = b.at(k, 0) + b.at(k, 1);
      CHECK(a.grad_view()[i * 4 + k] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul_nt agrees with explicit transpose") {
  Rng rng(11);
  Tensor a = random_tensor({2, 5}, rng);
  Tensor b = random_tensor({3, 5}, rng);
  Tensor c = matmul_nt(a, b);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 5; ++k) acc += a.at(i, k) * b.at(j, k);
      CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-14));
    }
  }
  double err = gradcheck::max_rel_err({a, b}, [&]() {
    return sum_all(sigmoid(matmul_nt(a, b)));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("softmax symmetry, stability, and masking") {
  Tensor x = Tensor::from_values({1, 3}, {0, 0, 0});
  Tensor y = softmax_lastdim(x);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(y.at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  Tensor big = Tensor::from_values({1, 2}, {1000, 0});
  Tensor yb = softmax_lastdim(big);
  CHECK(yb.at(0, 0) == doctest::Approx(1.0));
  CHECK(yb.at(0, 1) == doctest::Approx(0.0));
  CHECK(std::isfinite(yb.at(0, 0)));

  Tensor scores = Tensor::from_values({1, 3}, {0.3, 1.1, 5.0});
  Tensor mask = Tensor::from_values({3}, {1, 1, 0});
  Tensor ym = softmax_lastdim(scores, &mask);
  CHECK(ym.at(0, 2) == 0.0);  // exactly zero
  double denom = std::exp(0.3 - 1.1) + 1.0;
  CHECK(ym.at(0, 0) == doctest::Approx(std::exp(0.3 - 1.1) / denom).epsilon(1e-12));
  CHECK(ym.at(0, 1) == doctest::Approx(1.0 / denom).epsilon(1e-12));
  CHECK(ym.at(0, 0) + ym.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax all-masked row yields zeros and a warning") {
  long before = warning_count();
  Tensor scores = Tensor::from_values({2, 2}, {0.5, 0.25, 3.0, 4.0});
  Tensor mask = Tensor::from_values({2}, {0, 0});
  Tensor y = softmax_lastdim(scores, &mask);
  for (double v : y.values()) CHECK(v == 0.0);
  CHECK(warning_count() > before);
}

TEST_CASE("softmax rows sum to one and stay non-negative") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 6}, rng, 3.0);
    Tensor y = softmax_lastdim(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(y.at(r, j) >= 0.0);
        sum += y.at(r, j);
      }
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("softmax gradient vs finite differences") {
  Rng rng(31);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor probe = random_tensor({3, 5}, rng);
  double err = gradcheck::max_rel_err({x}, [&]() {
    return sum_all(mul(softmax_lastdim(x), probe));
  });
  CHECK(err < 1e-4);

  Tensor mask = Tensor::from_values({5}, {1, 1, 1, 0, 0});
  double err_masked = gradcheck::max_rel_err({x}, [&]() {
    return sum_all(mul(softmax_lastdim(x, &mask), probe));
  });
  CHECK(err_masked < 1e-4);
}

TEST_CASE("layer_norm zero-variance and closed-form cases") {
  Tensor gain = Tensor::full({4}, 1.0);
  Tensor bias = Tensor::zeros({4});
  Tensor constant = Tensor::from_values({1, 4}, {5, 5, 5, 5});
  Tensor y = layer_norm(constant, gain, bias);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.0));

  Tensor g2 = Tensor::full({2}, 1.0);
  Tensor b2 = Tensor::zeros({2});
  Tensor x = Tensor::from_values({1, 2}, {1, 3});
  Tensor y2 = layer_norm(x, g2, b2);
  // mean 2, var 1: xhat = +-1/sqrt(1 + eps)
  double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(y2.at(0, 0) == doctest::Approx(-expect).epsilon(1e-14));
  CHECK(y2.at(0, 1) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("layer_norm normalizes mean and variance per position") {
  Rng rng(41);
  Tensor x = random_tensor({5, 8}, rng, 2.5);
  Tensor gain = Tensor::full({8}, 1.0);
  Tensor bias = Tensor::zeros({8});
  Tensor y = layer_norm(x, gain, bias);
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += y.at(r, j);
    mean /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) {
      var += (y.at(r, j) - mean) * (y.at(r, j) - mean);
    }
    var /= 8.0;
    CHECK(std::fabs(mean) < 1e-7);
    CHECK(std::fabs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("layer_norm gradient vs finite differences") {
  Rng rng(43);
  Tensor x = random_tensor({3, 6}, rng);
  Tensor gain = random_tensor({6}, rng, 0.5);
  Tensor bias = random_tensor({6}, rng, 0.5);
  Tensor probe = random_tensor({3, 6}, rng);
  double err = gradcheck::max_rel_err({x, gain, bias}, [&]() {
    return sum_all(mul(layer_norm(x, gain, bias), probe));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("elementwise zero cases") {
  Tensor z = Tensor::from_values({1, 3}, {0, 0, 0});
  CHECK(sigmoid(z).at(0, 0) == doctest::Approx(0.5));
  CHECK(multitox::tanh(z).at(0, 1) == doctest::Approx(0.0));
  CHECK(gelu(z).at(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("gelu matches tanh approximation, not exact erf") {
  // The approximation sits within 1e-3 of the erf form but differs from it.
  for (double v : {-2.0, -0.5, 0.3, 1.7}) {
    Tensor x = Tensor::from_values({1, 1}, {v});
    double approx = gelu(x).item();
    double exact = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    CHECK(std::fabs(approx - exact) < 1e-3);
  }
}

TEST_CASE("elementwise gradients vs finite differences") {
  Rng rng(53);
  Tensor x = random_tensor({2, 7}, rng);
  Tensor probe = random_tensor({2, 7}, rng);
  for (auto fn : {+[](const Tensor& t) { return sigmoid(t); },
                  +[](const Tensor& t) { return multitox::tanh(t); },
                  +[](const Tensor& t) { return gelu(t); }}) {
    double err = gradcheck::max_rel_err({x}, [&]() {
      return sum_all(mul(fn(x), probe));
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("dropout identity, scaling, and reproducibility") {
  Rng rng(61);
  Tensor x = random_tensor({4, 4}, rng);

  Rng r0(1);
  Tensor eval_out = dropout(x, 0.5, false, r0);
  CHECK(eval_out.values() == x.values());  // exact identity

  Rng r1(1);
  Tensor zero_p = dropout(x, 0.0, true, r1);
  CHECK(zero_p.values() == x.values());

  Rng ra(99), rb(99);
  Tensor da = dropout(x, 0.4, true, ra);
  Tensor db = dropout(x, 0.4, true, rb);
  CHECK(da.values() == db.values());  // same seed, same mask

  // Survivors are scaled by 1/(1-p).
  for (std::size_t i = 0; i < da.numel(); ++i) {
    if (da.values()[i] != 0.0) {
      CHECK(da.values()[i] ==
            doctest::Approx(x.values()[i] / 0.6).epsilon(1e-12));
    }
  }

  Rng r2(5);
  CHECK_THROWS_AS(dropout(x, 1.0, true, r2), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, r2), ConfigError);
}

TEST_CASE("embedding lookup gathers, scatters, and bounds-checks") {
  Tensor table = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row0 = embedding_lookup(table, {0});
  CHECK(row0.values() == std::vector<double>{1, 2, 3});

  // Repeated id: grads add on the shared row.
  Tensor t2 = Tensor::from_values({3, 2}, {0, 0, 0, 0, 1, 1});
  t2.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor out = embedding_lookup(t2, {2, 2});
    tape.backward(sum_all(out));
  }
  CHECK(t2.grad_view()[4] == doctest::Approx(2.0));
  CHECK(t2.grad_view()[5] == doctest::Approx(2.0));
  CHECK(t2.grad_view()[0] == doctest::Approx(0.0));

  CHECK_THROWS_WITH_AS(embedding_lookup(table, {2}),
                       doctest::Contains("2"), IndexError);
}

TEST_CASE("backward seed and analytic derivative") {
  Tensor x = Tensor::from_values({1, 1}, {4.0});
  x.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum_all(x));
  }
  CHECK(x.grad_view()[0] == doctest::Approx(1.0));

  Tensor v = Tensor::from_values({1, 2}, {1, 2});
  v.set_requires_grad(true);
  Tape tape2;
  {
    Tape::Scope scope(tape2);
    tape2.backward(sum_all(mul(v, v)));
  }
  CHECK(v.grad_view()[0] == doctest::Approx(2.0));
  CHECK(v.grad_view()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::from_values({1, 2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  Tape::Scope scope(tape);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("gradient accumulation is additive without reset") {
  Tensor x = Tensor::from_values({1, 2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = sum_all(mul(x, x));
  }
  tape.backward(loss);
  tape.backward(loss);
  CHECK(x.grad_view()[0] == doctest::Approx(4.0));
  CHECK(x.grad_view()[1] == doctest::Approx(8.0));
  x.zero_grad();
  tape.backward(loss);
  CHECK(x.grad_view()[0] == doctest::Approx(2.0));
}

TEST_CASE("concat and slice round-trip with gradients") {
  Rng rng(71);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({2, 2}, rng);
  Tensor cat = concat_lastdim({a, b});
  CHECK(cat.shape() == std::vector<std::size_t>{2, 5});
  CHECK(cat.at(0, 3) == b.at(0, 0));
  Tensor back = slice_lastdim(cat, 3, 2);
  CHECK(back.values() == b.values());

  Tensor probe = random_tensor({2, 5}, rng);
  double err = gradcheck::max_rel_err({a, b}, [&]() {
    return sum_all(mul(concat_lastdim({a, b}), probe));
  });
  CHECK(err < 1e-6);

  Tensor probe2 = random_tensor({2, 2}, rng);
  double err2 = gradcheck::max_rel_err({a}, [&]() {
    return sum_all(mul(slice_lastdim(concat_lastdim({a, b}), 1, 2), probe2));
  });
  CHECK(err2 < 1e-6);
}

TEST_CASE("take_row and concat_rows gradients") {
  Rng rng(73);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor r1v = take_row(x, 1);
  CHECK(r1v.shape() == std::vector<std::size_t>{1, 4});
  CHECK(r1v.at(0, 2) == x.at(1, 2));
  CHECK_THROWS_AS(take_row(x, 3), IndexError);

  Tensor probe = random_tensor({2, 4}, rng);
  double err = gradcheck::max_rel_err({x}, [&]() {
    return sum_all(mul(concat_rows({take_row(x, 2), take_row(x, 0)}), probe));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("add, add_rowvec, scale gradients") {
  Rng rng(79);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor y = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor probe = random_tensor({3, 4}, rng);
  double err = gradcheck::max_rel_err({x, y, b}, [&]() {
    return sum_all(mul(add_rowvec(add(scale(x, 1.7), y), b), probe));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("bce_with_logits closed forms and oracle") {
  // Perfectly confident correct predictions: loss ~ 0.
  Tensor z = Tensor::from_values({1, 2}, {30, -30});
  Tensor y = Tensor::from_values({1, 2}, {1, 0});
  CHECK(bce_with_logits(z, y).item() < 1e-9);

  // z = 0: each label costs ln 2.
  Tensor z0 = Tensor::zeros({1, 2});
  Tensor y0 = Tensor::from_values({1, 2}, {1, 0});
  CHECK(bce_with_logits(z0, y0).item() ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));

  // Matches the naive probability-form oracle on random batches.
  Rng rng(83);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits = random_tensor({4, 5}, rng, 2.0);
    std::vector<double> tv(20);
    for (auto& t : tv) t = rng.next_bernoulli(0.5) ? 1.0 : 0.0;
    Tensor targets = Tensor::from_values({4, 5}, tv);
    double naive = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      double p = 1.0 / (1.0 + std::exp(-logits.values()[i]));
      double t = tv[i];
      naive += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    }
    naive /= 4.0;
    CHECK(bce_with_logits(logits, targets).item() ==
          doctest::Approx(naive).epsilon(1e-6));
  }

  Tensor bad = Tensor::from_values({1, 2}, {1, 2});
  CHECK_THROWS_AS(bce_with_logits(z, bad), ConfigError);
}

TEST_CASE("bce_with_logits gradient vs finite differences") {
  Rng rng(89);
  Tensor logits = random_tensor({3, 5}, rng);
  std::vector<double> tv(15);
  for (auto& t : tv) t = rng.next_bernoulli(0.5) ? 1.0 : 0.0;
  Tensor targets = Tensor::from_values({3, 5}, tv);
  double err = gradcheck::max_rel_err({logits}, [&]() {
    return bce_with_logits(logits, targets);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("every primitive passes a combined finite-difference sweep") {
  Rng rng(97);
  Tensor x = random_tensor({2, 6}, rng);
  Tensor w = random_tensor({6, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor gain = random_tensor({4}, rng, 0.3);
  Tensor bias = random_tensor({4}, rng, 0.3);
  Tensor probe = random_tensor({2, 4}, rng);
  double err = gradcheck::max_rel_err({x, w, b, gain, bias}, [&]() {
    Tensor h = add_rowvec(matmul(x, w), b);
    Tensor s = softmax_lastdim(h);
    Tensor g = gelu(layer_norm(h, gain, bias));
    return sum_all(mul(add(s, multitox::tanh(g)), probe));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("forward replay under the same seed is bit-identical") {
  Rng data_rng(101);
  Tensor x = random_tensor({3, 8}, data_rng);
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor d = dropout(softmax_lastdim(x), 0.3, true, rng);
    return sum_all(d).item();
  };
  CHECK(run(42) == run(42));
  CHECK(run(42) != run(43));
}
