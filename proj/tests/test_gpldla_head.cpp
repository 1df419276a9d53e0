#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gpldla/errors.hpp"
#include "gpldla/gpldla_head.hpp"
#include "gpldla/reference.hpp"

using namespace gpldla;

namespace {

Var c(const Tensor& t) { return Var::constant(t); }
Var scalar(double v) { return Var::constant(Tensor::scalar(v)); }

PriorVars prior_of(double beta, double beta_b) {
  return {scalar(std::log(beta)), scalar(std::log(beta_b))};
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("lda estimates") {
  const Tensor x = Tensor::matrix({{1, 0}, {3, 0}, {0, 2}, {0, 4}});
  const std::vector<std::size_t> y{0, 0, 1, 1};
  const auto lda = lda_ml_estimates(c(x), y, 2);
  check_close(lda.class_priors, Tensor::vector({0.5, 0.5}), 1e-15);
  check_close(lda.class_means.value(), Tensor::matrix({{2, 0}, {0, 3}}), 1e-15);
  CHECK(lda.ml_variance == doctest::Approx(0.5).epsilon(1e-14));

  const auto one_shot = lda_ml_estimates(c(Tensor::matrix({{1, 2}, {3, 4}})), std::vector<std::size_t>{0, 1}, 2);
  CHECK(one_shot.ml_variance == 0.0);

  const auto skewed = lda_ml_estimates(c(Tensor::matrix({{1}, {2}, {3}, {4}})),
                                       std::vector<std::size_t>{0, 1, 1, 1}, 2);
  check_close(skewed.class_priors, Tensor::vector({0.25, 0.75}), 1e-15);
  CHECK_THROWS_AS(lda_ml_estimates(c(x), y, 3), ContractError);
}

TEST_CASE("prior norm adjustment") {
  const auto adj = prior_norm_adjust(c(Tensor::matrix({{2, 0}, {0, 2}})), scalar(0.0));
  CHECK(adj.variance.item() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  check_close(adj.weights.value(), Tensor::matrix({{std::sqrt(2.0), 0}, {0, std::sqrt(2.0)}}), 1e-14);

  const auto doubled = prior_norm_adjust(c(Tensor::matrix({{2, 0}, {0, 2}})), scalar(std::log(2.0)));
  CHECK(doubled.variance.item() == doctest::Approx(adj.variance.item() / 2).epsilon(1e-14));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(doubled.weights.value()[i] == doctest::Approx(2 * adj.weights.value()[i]).epsilon(1e-14));
  }

  const auto single = prior_norm_adjust(c(Tensor::matrix({{1, 1, 1, 1}})), scalar(0.0));
  CHECK(single.variance.item() == doctest::Approx(1.0).epsilon(1e-14));
  check_close(single.weights.value(), Tensor::matrix({{1, 1, 1, 1}}), 1e-14);

  const auto zero = prior_norm_adjust(c(Tensor(Shape{2, 3})), scalar(0.0));
  CHECK(zero.weights.value().all_finite());
}

TEST_CASE("bias centering") {
  const Var means = c(Tensor::matrix({{1, 0}, {0, 1}}));
  const auto uniform = center_biases(Tensor::vector({0.5, 0.5}), means, scalar(0.7));
  check_close(uniform.biases.value(), Tensor::vector({0, 0}), 1e-15);

  const auto skew = center_biases(Tensor::vector({0.25, 0.75}), means, scalar(0.7));
  check_close(skew.biases.value(), Tensor::vector({-0.5 * std::log(3.0), 0.5 * std::log(3.0)}), 1e-12);
  CHECK(std::abs(skew.biases.value()[0] + 0.5493) < 1e-4);
  CHECK_THROWS_AS(center_biases(Tensor::vector({0.0, 1.0}), means, scalar(1)), ContractError);
}

TEST_CASE("laplace variances") {
  // Binary symmetric case: W = 0, b = 0 gives p = 0.5 at the single point.
  const auto v = laplace_variances(c(Tensor::matrix({{2}})), c(Tensor(Shape{2, 1})),
                                   c(Tensor(Shape{2})), scalar(0), scalar(0));
  check_close(v.weights.value(), Tensor::matrix({{0.5}, {0.5}}), 1e-15);
  check_close(v.biases.value(), Tensor::vector({0.8, 0.8}), 1e-15);

  // Saturated predictions fall back to the prior variances.
  const auto sat = laplace_variances(c(Tensor::matrix({{1}})), c(Tensor::matrix({{500}, {-500}})),
                                     c(Tensor(Shape{2})), scalar(std::log(1.5)), scalar(std::log(0.7)));
  check_close(sat.weights.value(), Tensor::matrix({{2.25}, {2.25}}), 1e-12);
  check_close(sat.biases.value(), Tensor::vector({0.49, 0.49}), 1e-12);
}

TEST_CASE("adapt is pure, permutation invariant, and sharpens with duplicated data") {
  Rng rng(21);
  const Tensor x = normal_sample(rng, Shape{6, 3});
  const std::vector<std::size_t> y{0, 1, 2, 0, 1, 1};
  const auto prior = prior_of(1.3, 0.8);
  const auto a = adapt(c(x), y, 3, prior);
  const auto b = adapt(c(x), y, 3, prior);
  CHECK(a.weights.value() == b.weights.value());
  CHECK(a.weight_variances.value() == b.weight_variances.value());

  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  Tensor xp(x.shape());
  std::vector<std::size_t> yp;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < 3; ++k) xp(i, k) = x(perm[i], k);
    yp.push_back(y[perm[i]]);
  }
  const auto p = adapt(c(xp), yp, 3, prior);
  check_close(p.weights.value(), a.weights.value(), 1e-12);
  check_close(p.biases.value(), a.biases.value(), 1e-12);
  check_close(p.weight_variances.value(), a.weight_variances.value(), 1e-12);
  check_close(p.bias_variances.value(), a.bias_variances.value(), 1e-12);

  Tensor xd(Shape{12, 3});
  std::vector<std::size_t> yd;
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t k = 0; k < 3; ++k) xd(i, k) = x(i % 6, k);
    yd.push_back(y[i % 6]);
  }
  const auto d = adapt(c(xd), yd, 3, prior);
  check_close(d.lda.class_priors, a.lda.class_priors, 1e-14);
  check_close(d.weights.value(), a.weights.value(), 1e-12);
  check_close(d.biases.value(), a.biases.value(), 1e-12);
  for (std::size_t i = 0; i < d.weight_variances.size(); ++i) {
    CHECK(d.weight_variances.value()[i] < a.weight_variances.value()[i]);
  }
  for (std::size_t j = 0; j < 3; ++j) CHECK(d.bias_variances.value()[j] < a.bias_variances.value()[j]);
}

TEST_CASE("adapt agrees with the loop reference") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = normal_sample(rng, Shape{7, 4});
    const std::vector<std::size_t> y{0, 1, 2, 2, 1, 0, 0};
    const double beta = 0.5 + rng.uniform();
    const auto post = adapt(c(x), y, 3, prior_of(beta, 1.0));
    const auto ref = reference::lda_plugin(x, y, 3, beta);
    check_close(post.weights.value(), ref.weights, 1e-12);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(post.biases.value()[j] - ref.biases[j]) < 1e-12);
  }
}

TEST_CASE("predictive") {
  Rng rng(8);
  const Tensor x = normal_sample(rng, Shape{5, 3});
  const std::vector<std::size_t> y{0, 1, 2, 0, 1};
  const auto post = adapt(c(x), y, 3, prior_of(1.0, 1.0));
  const Tensor q = normal_sample(rng, Shape{4, 3});
  const auto pred = predictive(post, c(q), 10, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto row = pred.probs.value().row(i);
    CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(predictive(post, c(q), 0, rng), ContractError);

  LaplacePosterior exact = post;
  exact.weight_variances = c(Tensor(post.weights.shape()));
  exact.bias_variances = c(Tensor(post.biases.shape()));
  const Tensor logits = matmul(q, transpose(post.weights.value()));
  Tensor expected(logits.shape());
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor row(Shape{3});
    for (std::size_t j = 0; j < 3; ++j) row[j] = logits(i, j) + post.biases.value()[j];
    const Tensor s = softmax(row);
    for (std::size_t j = 0; j < 3; ++j) expected(i, j) = s[j];
  }
  for (std::size_t m : {1u, 7u}) check_close(predictive(exact, c(q), m, rng).probs.value(), expected, 1e-15);
}

TEST_CASE("log posterior") {
  const Tensor x = Tensor::matrix({{1, 2}, {3, -1}, {0.5, 0.5}});
  const std::vector<std::size_t> y{0, 1, 2};
  const double at_zero =
      log_posterior(c(x), y, c(Tensor(Shape{3, 2})), c(Tensor(Shape{3})), scalar(0), scalar(0)).item();
  CHECK(at_zero == doctest::Approx(-3 * std::log(3.0)).epsilon(1e-14));

  Rng rng(2);
  const Tensor w = normal_sample(rng, Shape{3, 2});
  const Tensor b = normal_sample(rng, Shape{3});
  const double big = std::log(1e6);
  const double wide = log_posterior(c(x), y, c(w), c(b), scalar(big), scalar(big)).item();
  const double lik = reference::log_posterior(x, y, w, b.data(), 1e300, 1e300);
  CHECK(std::abs(wide - lik) <= 1e-10);
  CHECK(log_posterior(c(x), y, c(w), c(b), scalar(0.2), scalar(-0.3)).item() ==
        doctest::Approx(reference::log_posterior(x, y, w, b.data(), std::exp(0.2), std::exp(-0.3))).epsilon(1e-13));
}

TEST_CASE("query nll") {
  const Tensor p = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(query_nll(c(p), std::vector<std::size_t>{0, 1}).item() == 0.0);
}
