#pragma once

#include <cstddef>
#include <span>

#include "gpldla/autodiff.hpp"
#include "gpldla/tensor.hpp"

namespace gpldla {

// ProtoNet scores: -||q - c_j||^2 against the class centroids of the support set.
Var protonet_logits(const Var& support, std::span<const std::size_t> labels,
                    std::size_t num_classes, const Var& query);

// k(x, x') = scale * <x, x'> + offset, on unit-normalized rows when `cosine`.
struct KernelConfig {
  bool cosine = true;
  double scale = 1.0;   // beta^2
  double offset = 1.0;  // beta_b^2
  double noise = 0.1;   // observation variance sigma_n^2
  double jitter = 1e-8;
};

Tensor kernel_matrix(const KernelConfig& kernel, const Tensor& a, const Tensor& b);

// +1 for the own class and -1 elsewhere, [n x C].
Tensor one_vs_rest_targets(std::span<const std::size_t> labels, std::size_t num_classes);

// Lower Cholesky factor of a symmetric positive-definite matrix.
Tensor cholesky(const Tensor& a);
// Solves (L L^T) X = B for X.
Tensor cholesky_solve(const Tensor& lower, const Tensor& rhs);

// One-vs-rest GP regression fitted on a support set. All C problems share the
// kernel and the noise variance.
struct GpRegressionModel {
  KernelConfig kernel;
  Tensor support;  // [n x d]
  Tensor targets;  // [n x C]
  Tensor lower;    // Cholesky factor of K + (noise + jitter) I
  Tensor weights;  // (K + (noise + jitter) I)^-1 targets
};

GpRegressionModel gp_regression_fit(const Tensor& support, std::span<const std::size_t> labels,
                                    std::size_t num_classes, const KernelConfig& kernel);

// Predictive means E[y | x, S], [n_q x C]; the class prediction is the row argmax.
Tensor gp_regression_predict(const GpRegressionModel& model, const Tensor& query);

// Sum over the C one-vs-rest problems of the GP log marginal likelihood
// -1/2 t^T A^-1 t - 1/2 log|A| - n/2 log 2pi with A = K + (noise + jitter) I.
double gpdkt_marginal_loglik(const Tensor& features, const Tensor& targets,
                             const KernelConfig& kernel);

// Differentiable counterpart with kernel hyperparameters in log space:
// scale = exp(2 log_beta), offset = exp(2 log_beta_b), noise = exp(log_noise).
Var gpdkt_marginal_loglik(const Var& features, const Tensor& targets, const Var& log_beta,
                          const Var& log_beta_b, const Var& log_noise, bool cosine = true,
                          double jitter = 1e-8);

}  // namespace gpldla
