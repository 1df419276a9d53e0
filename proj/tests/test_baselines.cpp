#include <cmath>

#include "doctest.h"
#include "gpldla/baselines.hpp"
#include "gpldla/errors.hpp"
#include "gpldla/finite_diff.hpp"
#include "gpldla/reference.hpp"
#include "gpldla/rng.hpp"

using namespace gpldla;

namespace {

Var c(const Tensor& t) { return Var::constant(t); }

}  // namespace

TEST_CASE("protonet") {
  const Tensor s = Tensor::matrix({{0, 0}, {2, 0}, {4, 4}, {0, 2}});
  const std::vector<std::size_t> y{0, 0, 1, 1};
  const Tensor q = Tensor::matrix({{1, 0}, {2, 3}, {1.5, 1.5}});
  const Tensor logits = protonet_logits(c(s), y, 2, c(q)).value();
  CHECK(argmax_rows(logits) == std::vector<std::size_t>{0, 1, 0});
  // (1.5, 1.5) is equidistant from (1, 0) and (2, 3).
  CHECK(std::abs(logits(2, 0) - logits(2, 1)) < 1e-12);

  const Tensor one = protonet_logits(c(Tensor::matrix({{1, 1}, {-2, 0}})), std::vector<std::size_t>{0, 1}, 2,
                                     c(Tensor::matrix({{1, 1}, {-2, 0}}))).value();
  CHECK(one(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(one(1, 1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("gp regression") {
  KernelConfig lin{false, 1.0, 0.0, 1e-10, 0.0};
  const auto interp = gp_regression_fit(Tensor::matrix({{1.0}}), std::vector<std::size_t>{0}, 2, lin);
  const Tensor m = gp_regression_predict(interp, Tensor::matrix({{1.0}}));
  CHECK(m(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(m(0, 1) == doctest::Approx(-1.0).epsilon(1e-8));

  KernelConfig noisy = lin;
  noisy.noise = 1e12;
  const Tensor far = gp_regression_predict(
      gp_regression_fit(Tensor::matrix({{1.0}}), std::vector<std::size_t>{0}, 2, noisy), Tensor::matrix({{1.0}}));
  CHECK(std::abs(far(0, 0)) < 1e-10);

  // Two points, linear kernel: K = [[1, 1], [1, 5]] + 0.5 I.
  KernelConfig two{false, 1.0, 0.0, 0.5, 0.0};
  const Tensor x = Tensor::matrix({{1, 0}, {1, 2}});
  const auto model = gp_regression_fit(x, std::vector<std::size_t>{0, 1}, 2, two);
  const Tensor q = Tensor::matrix({{0.3, -1}});
  const Tensor pred = gp_regression_predict(model, q);
  // Hand solve of [[1.5, 1], [1, 5.5]] a = t.
  const double det = 1.5 * 5.5 - 1.0;
  const double a0 = (5.5 * 1 - 1 * -1) / det, a1 = (1.5 * -1 - 1 * 1) / det;
  const double k0 = 0.3, k1 = 0.3 - 2;
  CHECK(std::abs(pred(0, 0) - (k0 * a0 + k1 * a1)) < 1e-10);
  CHECK(std::abs(pred(0, 1) + (k0 * a0 + k1 * a1)) < 1e-10);

  const auto ortho = gp_regression_fit(Tensor::matrix({{1, 0}}), std::vector<std::size_t>{1}, 3, two);
  const Tensor zero = gp_regression_predict(ortho, Tensor::matrix({{0, 5}}));
  for (double v : zero.data()) CHECK(v == 0.0);

  KernelConfig small{false, 1.0, 0.0, 1e-3, 0.0};
  Rng rng(4);
  const Tensor xs = normal_sample(rng, Shape{6, 8});
  const std::vector<std::size_t> ys{0, 1, 2, 0, 1, 2};
  const Tensor dup = gp_regression_predict(gp_regression_fit(xs, ys, 3, small), xs);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK((dup(i, j) > 0) == (ys[i] == j));
  }
}

TEST_CASE("cholesky") {
  const Tensor a = Tensor::matrix({{4, 2}, {2, 3}});
  const Tensor l = cholesky(a);
  const Tensor llt = matmul(l, transpose(l));
  for (std::size_t i = 0; i < 4; ++i) CHECK(llt[i] == doctest::Approx(a[i]).epsilon(1e-15));
  CHECK_THROWS_AS(cholesky(Tensor::matrix({{1, 2}, {2, 1}})), NumericalError);
  const Tensor x = cholesky_solve(l, Tensor::matrix({{1}, {2}}));
  const Tensor oracle = reference::dense_solve(a, Tensor::matrix({{1}, {2}}));
  CHECK(std::abs(x[0] - oracle[0]) < 1e-14);
  CHECK(std::abs(x[1] - oracle[1]) < 1e-14);
}

TEST_CASE("marginal likelihood") {
  KernelConfig unit{false, 1.0, 0.0, 1.0, 0.0};
  const double ll = gpdkt_marginal_loglik(Tensor::matrix({{1.0}}), Tensor::matrix({{1.0}}), unit);
  const double expected = -0.25 - 0.5 * std::log(2.0) - 0.5 * std::log(2 * M_PI);
  CHECK(ll == doctest::Approx(expected).epsilon(1e-14));
  CHECK(std::abs(ll + 1.5155) < 1e-4);

  Rng rng(6);
  const Tensor x = normal_sample(rng, Shape{4, 3});
  const Tensor t = one_vs_rest_targets(std::vector<std::size_t>{0, 1, 1, 0}, 2);
  KernelConfig k{false, 1.3, 0.4, 0.2, 0.0};
  const double full = gpdkt_marginal_loglik(x, t, k);
  const double zero_t = gpdkt_marginal_loglik(x, Tensor(t.shape()), k);
  Tensor a = kernel_matrix(k, x, x);
  for (std::size_t i = 0; i < 4; ++i) a(i, i) += k.noise;
  const Tensor sol = reference::dense_solve(a, t);
  double quad = 0;
  for (std::size_t i = 0; i < t.size(); ++i) quad += t[i] * sol[i];
  CHECK(zero_t - full == doctest::Approx(0.5 * quad).epsilon(1e-12));
}

TEST_CASE("differentiable marginal likelihood matches the tensor form and finite differences") {
  Rng rng(12);
  const Tensor x0 = normal_sample(rng, Shape{5, 3});
  const Tensor t = one_vs_rest_targets(std::vector<std::size_t>{0, 1, 2, 0, 1}, 3);
  const double rho = 0.2, rho_b = -0.4, noise = std::log(0.3);
  auto eval = [&](const Tensor& x, double r, double rb, double n) {
    return gpdkt_marginal_loglik(c(x), t, c(Tensor::scalar(r)), c(Tensor::scalar(rb)), c(Tensor::scalar(n)), true, 1e-8)
        .item();
  };
  KernelConfig k{true, std::exp(2 * rho), std::exp(2 * rho_b), 0.3, 1e-8};
  CHECK(eval(x0, rho, rho_b, noise) == doctest::Approx(gpdkt_marginal_loglik(x0, t, k)).epsilon(1e-12));

  Var x = Var::parameter(x0);
  Var r = Var::parameter(Tensor::scalar(rho)), rb = Var::parameter(Tensor::scalar(rho_b)),
      n = Var::parameter(Tensor::scalar(noise));
  backward(gpdkt_marginal_loglik(x, t, r, rb, n, true, 1e-8));
  const Tensor fx = finite_diff_grad([&](const Tensor& v) { return eval(v, rho, rho_b, noise); }, x0);
  for (std::size_t i = 0; i < fx.size(); ++i) CHECK(std::abs(x.grad()[i] - fx[i]) <= 1e-5 * std::max(1.0, std::abs(fx[i])));
  auto scalar_fd = [](auto f, double v) { return (f(v + 1e-5) - f(v - 1e-5)) / 2e-5; };
  CHECK(r.grad().item() == doctest::Approx(scalar_fd([&](double v) { return eval(x0, v, rho_b, noise); }, rho)).epsilon(1e-5));
  CHECK(rb.grad().item() == doctest::Approx(scalar_fd([&](double v) { return eval(x0, rho, v, noise); }, rho_b)).epsilon(1e-5));
  CHECK(n.grad().item() == doctest::Approx(scalar_fd([&](double v) { return eval(x0, rho, rho_b, v); }, noise)).epsilon(1e-5));
}
