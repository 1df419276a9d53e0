#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gpldla/autodiff.hpp"
#include "gpldla/rng.hpp"
#include "gpldla/tensor.hpp"

namespace gpldla {

// Prior scales of the class weights and biases, w_j ~ N(0, beta^2 I) and
// b_j ~ N(0, beta_b^2), kept in log space so both stay positive.
struct GpPrior {
  double log_beta = 0.0;
  double log_beta_b = 0.0;

  double beta() const;
  double beta_b() const;
};

// Graph leaves for the prior scalars of one episode.
struct PriorVars {
  Var log_beta;
  Var log_beta_b;

  static PriorVars from(const GpPrior& prior, bool requires_grad = true);
};

// Equal-covariance Gaussian mixture fit on the support set.
struct LdaEstimates {
  Tensor class_priors;  // [C], n_j / n
  Var class_means;      // [C x d]
  // Pooled spherical ML variance. Degenerate (0) for one-shot tasks and
  // never used by the plugin; reported for diagnostics.
  double ml_variance = 0.0;
};

struct PriorNormAdjustment {
  Var variance;  // scalar sigma^2 chosen so mean ||w_j||^2 = beta^2 d
  Var weights;   // [C x d], class means / variance
};

struct CenteredBiases {
  Var biases;  // [C], zero-sum
  Var alpha;   // scalar offset added to the raw LDA biases
};

struct LaplaceVariances {
  Var weights;  // [C x d] diagonal posterior variances
  Var biases;   // [C]
};

// Diagonal Gaussian posterior over (W, b) around the LDA plugin.
struct LaplacePosterior {
  LdaEstimates lda;
  Var variance;          // adjusted shared variance
  Var weights;           // [C x d]
  Var biases;            // [C]
  Var weight_variances;  // [C x d]
  Var bias_variances;    // [C]
  Var alpha;
};

// Rows of `probs` are class distributions for each query point.
struct PredictiveDistribution {
  Var probs;  // [n_q x C]
  std::size_t samples = 0;
};

// Standard normal draws for the reparameterized posterior samples.
struct McNoise {
  std::vector<Tensor> weights;  // M tensors of [C x d]
  std::vector<Tensor> biases;   // M tensors of [C]

  std::size_t samples() const { return weights.size(); }
};

enum class PluginFault {
  none,
  // Mutation-test mode: uses beta instead of 1/beta when sizing the variance.
  inverted_beta_exponent,
};

struct AdaptOptions {
  PluginFault fault = PluginFault::none;
};

// Class priors, class means and pooled variance; labels must lie in
// [0, num_classes) with every class present.
LdaEstimates lda_ml_estimates(const Var& features, std::span<const std::size_t> labels,
                              std::size_t num_classes);

// sigma^2 = rms(||mu_j||) / (beta sqrt(d)) and w_j = mu_j / sigma^2. The
// rms is floored at 1e-12 so all-zero means give zero weights instead of NaN.
PriorNormAdjustment prior_norm_adjust(const Var& class_means, const Var& log_beta);

// b_j = log pi_j - ||mu_j||^2 / (2 sigma^2) + alpha with alpha chosen to
// maximize the bias prior, which makes the biases sum to zero.
CenteredBiases center_biases(const Tensor& class_priors, const Var& class_means,
                             const Var& variance);

// Inverse diagonal of the negative log-posterior Hessian at (W, b):
// V_j = 1 / (1/beta^2 + sum_x a(x,j) phi(x)^2), v_j = 1 / (1/beta_b^2 + sum_x a(x,j))
// with a(x,j) = p_j(x) (1 - p_j(x)).
LaplaceVariances laplace_variances(const Var& features, const Var& weights, const Var& biases,
                                   const Var& log_beta, const Var& log_beta_b);

// Closed-form task adaptation on the support set.
LaplacePosterior adapt(const Var& features, std::span<const std::size_t> labels,
                       std::size_t num_classes, const PriorVars& prior,
                       const AdaptOptions& options = {});

McNoise draw_mc_noise(Rng& rng, std::size_t samples, std::size_t num_classes, std::size_t dim);

// Monte-Carlo average of softmax predictions under posterior samples
// w = w* + sqrt(V) eps, b = b* + sqrt(v) gamma.
PredictiveDistribution predictive(const LaplacePosterior& posterior, const Var& query,
                                  const McNoise& noise);
PredictiveDistribution predictive(const LaplacePosterior& posterior, const Var& query,
                                  std::size_t samples, Rng& rng);

// Unnormalized log posterior of (W, B) given the labelled features.
Var log_posterior(const Var& features, std::span<const std::size_t> labels, const Var& weights,
                  const Var& biases, const Var& log_beta, const Var& log_beta_b);

// Mean negative log probability of the true class.
Var query_nll(const Var& probs, std::span<const std::size_t> labels);

}  // namespace gpldla
