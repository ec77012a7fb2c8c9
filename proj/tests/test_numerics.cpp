#include <doctest.h>

#include <cmath>
#include <random>

#include "ecat/adagrad.hpp"
#include "ecat/autodiff.hpp"
#include "gradcheck.hpp"

using namespace ecat;

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  Tensor bad({1, 2}, std::vector<double>{1.0, NAN});
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_AS(require_finite(bad, "bad"), NumericError);
}

TEST_CASE("matmul hand examples") {
  Var eye = Var::constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var a = Var::constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = Var::constant(Tensor::matrix({{5, 6}, {7, 8}}));
  CHECK(matmul(eye, a).value() == a.value());
  CHECK(matmul(a, b).value() == Tensor::matrix({{19, 22}, {43, 50}}));
  Var x = Var::constant(Tensor::zeros(3, 2));
  CHECK_THROWS_WITH_AS(matmul(a, x).value(), doctest::Contains("[3, 2]"), DimensionError);
}

TEST_CASE("sum(matmul(a, b)) gradient w.r.t. a is b's row sums") {
  std::mt19937_64 rng(7);
  Var a = Var::parameter(ecat::testing::random_tensor(3, 4, rng));
  Var b = Var::parameter(ecat::testing::random_tensor(4, 5, rng));
  backward(sum(matmul(a, b)));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      double row = 0.0;
      for (std::size_t j = 0; j < 5; ++j) row += b.value()(k, j);
      CHECK(a.grad()(i, k) == doctest::Approx(row).epsilon(1e-12));
    }
  }
}

TEST_CASE("pointwise values") {
  CHECK(sigmoid(Var::constant(Tensor::scalar(0.0))).value().item() == 0.5);
  CHECK(relu(Var::constant(Tensor::scalar(-3.0))).value().item() == 0.0);
  CHECK(relu(Var::constant(Tensor::scalar(3.0))).value().item() == 3.0);
  Var x = Var::parameter(Tensor::scalar(0.0));
  backward(sum(sigmoid(x)));
  CHECK(x.grad().item() == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("cosine similarity examples and range") {
  auto cos = [](Tensor u, Tensor v) {
    return cosine_similarity(Var::constant(std::move(u)), Var::constant(std::move(v))).value().item();
  };
  CHECK(cos(Tensor::matrix({{1, 0}}), Tensor::matrix({{1, 0}})) == doctest::Approx(1.0));
  CHECK(cos(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 1}})) == doctest::Approx(0.0));
  CHECK(cos(Tensor::matrix({{1, 2}}), Tensor::matrix({{2, 1}})) == doctest::Approx(0.8).epsilon(1e-12));
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Var u = Var::constant(ecat::testing::random_tensor(4, 6, rng, -3, 3));
    Var v = trial % 3 == 0 ? Var::constant(ecat::testing::random_tensor(4, 6, rng, -3, 3)) : u;
    const Tensor cs = cosine_similarity(u, v).value();
    for (double c : cs.data()) {
      CHECK(c <= 1.0 + 1e-12);
      CHECK(c >= -1.0 - 1e-12);
    }
  }
}

TEST_CASE("binary cross entropy examples") {
  auto bce = [](double p, double y) {
    const double labels[] = {y};
    return binary_cross_entropy(Var::constant(Tensor::scalar(p)), labels).value().item();
  };
  CHECK(bce(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce(0.9, 0) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  const double near = bce(1.0 - 1e-7, 1);
  CHECK(near > 0.0);
  CHECK(near < 2e-7);
}

TEST_CASE("entropy examples and symmetry") {
  CHECK(entropy_binary(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(entropy_binary(0.0) == 0.0);
  CHECK(entropy_binary(1.0) == 0.0);
  CHECK(entropy_binary(0.9) == doctest::Approx(0.325083).epsilon(1e-6));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double p = u(rng);
    CHECK(entropy_binary(p) == doctest::Approx(entropy_binary(1.0 - p)).epsilon(1e-12));
    CHECK(entropy_binary(p) <= std::log(2.0) + 1e-15);
  }
}

TEST_CASE("stop_gradient forward identity and weight gradient") {
  std::mt19937_64 rng(3);
  Var x = Var::parameter(ecat::testing::random_tensor(3, 2, rng));
  Var w = Var::parameter(ecat::testing::random_tensor(3, 2, rng));
  Var s = stop_gradient(x);
  CHECK(s.value() == x.value());
  backward(sum(mul(s, w)));
  CHECK_FALSE(x.has_grad());
  CHECK(w.grad() == x.value());
}

TEST_CASE("composite MLP loss matches finite differences") {
  std::mt19937_64 rng(9);
  using ecat::testing::random_tensor;
  Var x = Var::constant(random_tensor(5, 4, rng));
  Var w1 = Var::parameter(random_tensor(4, 6, rng)), b1 = Var::parameter(random_tensor(1, 6, rng));
  Var w2 = Var::parameter(random_tensor(6, 1, rng)), b2 = Var::parameter(random_tensor(1, 1, rng));
  const std::vector<double> y = {1, 0, 1, 1, 0};
  auto f = [&] { return mean(binary_cross_entropy(sigmoid(add(matmul(tanh(add(matmul(x, w1), b1)), w2), b2)), y)); };
  auto res = ecat::testing::grad_check(f, {w1, b1, w2, b2});
  CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("sum gradient is all ones; second backward doubles") {
  Var x = Var::parameter(Tensor({2, 3}, 0.7));
  backward(sum(x));
  CHECK(x.grad() == Tensor({2, 3}, 1.0));
  backward(sum(x));
  CHECK(x.grad() == Tensor({2, 3}, 2.0));
}

namespace {
// One parameter whose gradient is set to `g` by a backward pass.
void feed_gradient(Var& p, double g) { backward(sum(scale(p, g))); }
}  // namespace

TEST_CASE("adagrad update rule") {
  SUBCASE("single step from zero") {
    Var p = Var::parameter(Tensor::scalar(0.0));
    Adagrad opt({{"p", p}}, {0.01, 1.0, 1e-8, 0.0});
    feed_gradient(p, 1.0);
    opt.step();
    CHECK(p.value().item() == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(opt.accumulators()[0].item() == 1.0);
  }
  SUBCASE("zero gradient decays the accumulator only") {
    Var p = Var::parameter(Tensor::scalar(0.3));
    Adagrad opt({{"p", p}}, {0.01, 0.9, 1e-8, 0.0});
    opt.accumulators()[0][0] = 2.0;
    feed_gradient(p, 0.0);
    opt.step();
    CHECK(p.value().item() == 0.3);
    CHECK(opt.accumulators()[0].item() == doctest::Approx(1.8).epsilon(1e-15));
  }
  SUBCASE("steps shrink under constant gradient with decay 1") {
    Var p = Var::parameter(Tensor::scalar(0.0));
    Adagrad opt({{"p", p}}, {0.01, 1.0, 1e-8, 0.0});
    double prev = 0.0, last = INFINITY;
    for (int i = 0; i < 20; ++i) {
      feed_gradient(p, 1.0);
      opt.step();
      const double step = std::abs(p.value().item() - prev);
      CHECK(step <= last);
      CHECK(opt.accumulators()[0].item() >= 0.0);
      last = step;
      prev = p.value().item();
    }
  }
  SUBCASE("update bounded by lr * |g| / eps") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    Var p = Var::parameter(Tensor::zeros(1, 8));
    Adagrad opt({{"p", p}}, {0.05, 0.99, 1e-3, 0.0});
    for (int i = 0; i < 30; ++i) {
      Tensor before = p.value();
      Tensor g = Tensor::zeros(1, 8);
      for (std::size_t k = 0; k < 8; ++k) g[k] = n(rng);
      backward(sum(mul(p, Var::constant(g))));
      opt.step();
      for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(p.value()[k] - before[k]) <= 0.05 * std::abs(g[k]) / 1e-3);
    }
  }
  SUBCASE("non-finite gradient names the parameter and leaves values intact") {
    // Two finite 1e308 contributions overflow only once accumulated.
    Var p = Var::parameter(Tensor::scalar(1e-300));
    Var q = Var::parameter(Tensor::scalar(2.0));
    Adagrad opt({{"ok", q}, {"embedding", p}}, {});
    Var big = Var::constant(Tensor::scalar(1e308));
    backward(add(sum(q), add(sum(mul(p, big)), sum(mul(p, big)))));
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("embedding"), NumericError);
    CHECK(p.value().item() == 1e-300);
    CHECK(q.value().item() == 2.0);
  }
}

TEST_CASE("parameter hash tracks values") {
  Var p = Var::parameter(Tensor::scalar(1.0));
  ParamList params{{"p", p}};
  const auto h = hash_parameters(params);
  CHECK(hash_parameters(params) == h);
  p.mutable_value()[0] = 1.0 + 1e-15;
  CHECK(hash_parameters(params) != h);
}
