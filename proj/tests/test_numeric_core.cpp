#include <cmath>

#include "doctest.h"
#include "gpldla/autodiff.hpp"
#include "gpldla/errors.hpp"
#include "gpldla/finite_diff.hpp"
#include "gpldla/rng.hpp"
#include "gpldla/tensor.hpp"

using namespace gpldla;

namespace {

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
  }
}

void check_grad(const std::function<Var(const Var&)>& f, const Tensor& x0, double tol = 1e-4) {
  Var x = Var::parameter(x0);
  backward(f(x));
  const Tensor fd = finite_diff_grad([&](const Tensor& x1) { return f(Var::constant(x1)).item(); }, x0);
  const Tensor g = x.grad();
  for (std::size_t i = 0; i < fd.size(); ++i) {
    CHECK(std::abs(g[i] - fd[i]) <= tol * std::max({1e-6, std::abs(fd[i]), std::abs(g[i])}));
  }
}

}  // namespace

TEST_CASE("matmul") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::identity(2), a) == a);
  CHECK(matmul(a, Tensor::matrix({{1}, {1}})) == Tensor::matrix({{3}, {7}}));
  CHECK(matmul(Tensor(Shape{2, 2}), a) == Tensor(Shape{2, 2}));
  CHECK_THROWS_AS(matmul(a, Tensor(Shape{3, 1})), DimensionError);
}

TEST_CASE("log_sum_exp") {
  CHECK(log_sum_exp(Tensor::vector({0, 0})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(log_sum_exp(Tensor::vector({1000, 1000})) == doctest::Approx(1000 + std::log(2.0)));
  CHECK(log_sum_exp(Tensor::vector({0, 1, 2})) == doctest::Approx(2.40760596444438).epsilon(1e-12));
  CHECK_THROWS_AS(log_sum_exp(Tensor(Shape{0})), DomainError);
}

TEST_CASE("softmax") {
  check_close(softmax(Tensor::vector({0, 0, 0})), Tensor::vector({1.0 / 3, 1.0 / 3, 1.0 / 3}), 1e-15);
  check_close(softmax(Tensor::vector({0, std::log(3.0)})), Tensor::vector({0.25, 0.75}), 1e-15);
  const Tensor v = Tensor::vector({0.3, -1.2, 2.0});
  check_close(softmax(Tensor::vector({5.3, 3.8, 7.0})), softmax(v), 1e-14);
  const Tensor big = softmax(Tensor::vector({1e4, 0}));
  CHECK(big.all_finite());
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax_rows(Tensor::matrix({{1, 3, 3}, {2, 2, 0}})) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("backward basics") {
  Var x = Var::parameter(Tensor::scalar(2.0));
  Var y = Var::parameter(Tensor::scalar(3.0));
  Var z = Var::parameter(Tensor::scalar(5.0));
  backward(x * y);
  CHECK(x.grad().item() == 3.0);
  CHECK(y.grad().item() == 2.0);
  CHECK(z.grad().item() == 0.0);
  CHECK_THROWS_AS(backward(Var::parameter(Tensor::vector({1, 2}))), ContractError);
}

TEST_CASE("log_sum_exp gradient is softmax") {
  Rng rng(3);
  const Tensor v0 = normal_sample(rng, Shape{6});
  Var v = Var::parameter(v0);
  backward(log_sum_exp(v));
  check_close(v.grad(), softmax(v0), 1e-12);
  check_grad([](const Var& x) { return log_sum_exp(x); }, v0, 1e-6);
}

TEST_CASE("every differentiable op matches finite differences") {
  Rng rng(11);
  const Tensor m = normal_sample(rng, Shape{3, 4});
  const Tensor other = normal_sample(rng, Shape{4, 2});
  const Tensor col = normal_sample(rng, Shape{3});
  const Tensor row = normal_sample(rng, Shape{4});
  Tensor positive = m;
  for (auto& x : positive.data()) x = 0.5 + std::abs(x);
  const std::vector<std::size_t> idx{1, 3, 0};
  auto weigh = [&](const Var& v) {
    Tensor w(v.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + i);
    return sum(v * Var::constant(w));
  };
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor r = normal_sample(rng, Shape{3, 4});
    check_grad([&](const Var& x) { return weigh(matmul(x, Var::constant(other))); }, r);
    check_grad([&](const Var& x) { return weigh(transpose(x)); }, r);
    check_grad([&](const Var& x) { return weigh(exp(x)); }, r);
    check_grad([&](const Var& x) { return weigh(tanh(x)); }, r);
    check_grad([&](const Var& x) { return weigh(square(x) + x * x - x / 3.0); }, r);
    check_grad([&](const Var& x) { return weigh(sum_rows(x)) + weigh(sum_cols(x)); }, r);
    check_grad([&](const Var& x) { return weigh(softmax(x)); }, r);
    check_grad([&](const Var& x) { return weigh(log_sum_exp_rows(x)) + mean(x); }, r);
    check_grad([&](const Var& x) { return weigh(pick(x, idx)); }, r);
    check_grad([&](const Var& x) { return weigh(add_row(x, Var::constant(row))); }, r);
    check_grad([&](const Var& c) { return weigh(add_col(Var::constant(r), c)); }, col);
    check_grad([&](const Var& x) { return weigh(concat_rows(x, x * 2.0)); }, r);
    check_grad([&](const Var& x) { return weigh(slice_rows(x, 1, 3)); }, r);
    check_grad([&](const Var& x) { return weigh(reshape(x, {12})); }, r);
    check_grad([&](const Var& x) { return weigh(log(x) + sqrt(x) + reciprocal(x)); }, positive);
    check_grad([&](const Var& x) { return weigh(div_col(x, Var::constant(col) * 0.0 + 2.0)); }, r);
    check_grad([&](const Var& c) { return weigh(div_col(Var::constant(r), c)); },
               Tensor::vector({1.5, 2.0, -3.0}));
    check_grad([&](const Var& x) { return weigh(x * Var::constant(Tensor::scalar(1.7)) - 1.0); }, r);
  }
}

TEST_CASE("finite_diff_grad") {
  const Tensor g = finite_diff_grad([](const Tensor& x) { return x[0] * x[0]; }, Tensor::vector({3}));
  CHECK(std::abs(g[0] - 6.0) < 1e-8);
  const Tensor z = finite_diff_grad([](const Tensor&) { return 4.0; }, Tensor::vector({1, 2}));
  CHECK(z == Tensor::vector({0, 0}));
  CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return NAN; }, Tensor::vector({1})),
                  NumericalError);
}

TEST_CASE("rng determinism and moments") {
  Rng a(42), b(42), c(43);
  const Tensor ta = normal_sample(a, Shape{8});
  CHECK(ta == normal_sample(b, Shape{8}));
  CHECK_FALSE(ta == normal_sample(c, Shape{8}));
  Rng r(7);
  const std::size_t n = 100000;
  double s = 0, sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    sq += x * x;
  }
  const double mean = s / n;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(sq / n - mean * mean - 1.0) < 0.05);
  CHECK(Rng::derive(1, 2) != Rng::derive(1, 3));
  CHECK(Rng::derive(1, 2) == Rng::derive(1, 2));
}
