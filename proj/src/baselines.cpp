#include "gpldla/baselines.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gpldla/backbone.hpp"
#include "gpldla/errors.hpp"
#include "gpldla/gpldla_head.hpp"

namespace gpldla {

Var protonet_logits(const Var& support, std::span<const std::size_t> labels,
                    std::size_t num_classes, const Var& query) {
  Var centroids = lda_ml_estimates(support, labels, num_classes).class_means;
  if (query.value().rank() != 2 || query.value().cols() != centroids.value().cols()) {
    throw DimensionError("query " + shape_string(query.shape()) + " against centroids " +
                         shape_string(centroids.shape()));
  }
  Var cross = matmul(query, transpose(centroids)) * 2.0;
  return add_row(add_col(cross, -sum_rows(square(query))), -sum_rows(square(centroids)));
}

namespace {

Tensor unit_rows(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    double s = 0.0;
    for (double v : row) s += v * v;
    const double norm = std::sqrt(s) + 1e-12;
    for (double& v : row) v /= norm;
  }
  return out;
}

void add_diagonal(Tensor& a, double v) {
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += v;
}

double log_det_from_cholesky(const Tensor& lower) {
  double s = 0.0;
  for (std::size_t i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

void check_targets(const Tensor& features, const Tensor& targets) {
  if (targets.rank() != 2 || targets.rows() != features.rows()) {
    throw DimensionError("targets " + shape_string(targets.shape()) + " for features " +
                         shape_string(features.shape()));
  }
}

// -1/2 sum_j t_j^T A^-1 t_j - C/2 log|A| - nC/2 log 2pi, given A's factor and A^-1 T.
double marginal_from_factor(const Tensor& lower, const Tensor& targets, const Tensor& weights) {
  double quad = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) quad += targets[i] * weights[i];
  const double n = static_cast<double>(targets.rows());
  const double c = static_cast<double>(targets.cols());
  return -0.5 * quad - 0.5 * c * log_det_from_cholesky(lower) -
         0.5 * n * c * std::log(2.0 * std::numbers::pi);
}

}  // namespace

Tensor kernel_matrix(const KernelConfig& kernel, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("kernel_matrix: " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tensor k = kernel.cosine ? matmul(unit_rows(a), transpose(unit_rows(b))) : matmul(a, transpose(b));
  for (double& v : k.data()) v = kernel.scale * v + kernel.offset;
  return k;
}

Tensor one_vs_rest_targets(std::span<const std::size_t> labels, std::size_t num_classes) {
  Tensor t(Shape{labels.size(), num_classes}, -1.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw ContractError("label outside [0, C)");
    t(i, labels[i]) = 1.0;
  }
  return t;
}

Tensor cholesky(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw DimensionError("cholesky needs a square matrix, got " + shape_string(a.shape()));
  }
  const std::size_t n = a.rows();
  Tensor l(Shape{n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      throw NumericalError("matrix is not positive definite (pivot " + std::to_string(j) + ")");
    }
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

Tensor cholesky_solve(const Tensor& lower, const Tensor& rhs) {
  const std::size_t n = lower.rows();
  Tensor x = rhs.rank() == 1 ? Tensor(Shape{n, 1}, std::vector<double>(rhs.data().begin(), rhs.data().end()))
                             : rhs;
  if (x.rows() != n) {
    throw DimensionError("cholesky_solve: factor " + shape_string(lower.shape()) + ", rhs " +
                         shape_string(rhs.shape()));
  }
  const std::size_t m = x.cols();
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * x(k, c);
      x(i, c) = s / lower(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x(k, c);
      x(ii, c) = s / lower(ii, ii);
    }
  }
  if (rhs.rank() == 1) return Tensor(rhs.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  return x;
}

GpRegressionModel gp_regression_fit(const Tensor& support, std::span<const std::size_t> labels,
                                    std::size_t num_classes, const KernelConfig& kernel) {
  if (!(kernel.noise > 0.0)) throw ContractError("GP noise variance must be positive");
  if (labels.size() != support.rows()) {
    throw DimensionError(std::to_string(labels.size()) + " labels for " +
                         std::to_string(support.rows()) + " support rows");
  }
  GpRegressionModel model;
  model.kernel = kernel;
  model.support = support;
  model.targets = one_vs_rest_targets(labels, num_classes);
  Tensor a = kernel_matrix(kernel, support, support);
  add_diagonal(a, kernel.noise + kernel.jitter);
  model.lower = cholesky(a);
  model.weights = cholesky_solve(model.lower, model.targets);
  return model;
}

Tensor gp_regression_predict(const GpRegressionModel& model, const Tensor& query) {
  return matmul(kernel_matrix(model.kernel, query, model.support), model.weights);
}

double gpdkt_marginal_loglik(const Tensor& features, const Tensor& targets,
                             const KernelConfig& kernel) {
  if (!(kernel.noise > 0.0)) throw ContractError("GP noise variance must be positive");
  check_targets(features, targets);
  Tensor a = kernel_matrix(kernel, features, features);
  add_diagonal(a, kernel.noise + kernel.jitter);
  const Tensor lower = cholesky(a);
  return marginal_from_factor(lower, targets, cholesky_solve(lower, targets));
}

Var gpdkt_marginal_loglik(const Var& features, const Tensor& targets, const Var& log_beta,
                          const Var& log_beta_b, const Var& log_noise, bool cosine,
                          double jitter) {
  check_targets(features.value(), targets);
  Var phi = cosine ? normalize_rows(features) : features;
  Var gram = matmul(phi, transpose(phi)) * exp(2.0 * log_beta) + exp(2.0 * log_beta_b);
  Var noise = exp(log_noise);

  Tensor a = gram.value();
  add_diagonal(a, noise.item() + jitter);
  Tensor lower = cholesky(a);
  Tensor weights = cholesky_solve(lower, targets);
  const double value = marginal_from_factor(lower, targets, weights);

  // d/dA = 1/2 W W^T - C/2 A^-1, with W = A^-1 T.
  return Var::make(
      Tensor::scalar(value), {gram, noise},
      [lower = std::move(lower), weights = std::move(weights)](
          const Tensor& g, const Tensor&, std::span<const Var::NodePtr> ps) {
        const std::size_t n = lower.rows();
        const double c = static_cast<double>(weights.cols());
        Tensor dA = matmul(weights, transpose(weights));
        const Tensor inv = cholesky_solve(lower, Tensor::identity(n));
        for (std::size_t i = 0; i < dA.size(); ++i) dA[i] = g.item() * (0.5 * dA[i] - 0.5 * c * inv[i]);
        double trace = 0.0;
        for (std::size_t i = 0; i < n; ++i) trace += dA(i, i);
        accumulate_grad(ps[0], dA);
        accumulate_grad(ps[1], Tensor::scalar(trace));
      });
}

}  // namespace gpldla
