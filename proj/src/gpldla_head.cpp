#include "gpldla/gpldla_head.hpp"

#include <cmath>
#include <string>

#include "gpldla/errors.hpp"

namespace gpldla {

double GpPrior::beta() const { return std::exp(log_beta); }
double GpPrior::beta_b() const { return std::exp(log_beta_b); }

PriorVars PriorVars::from(const GpPrior& prior, bool requires_grad) {
  auto leaf = [requires_grad](double v) {
    return requires_grad ? Var::parameter(Tensor::scalar(v)) : Var::constant(Tensor::scalar(v));
  };
  return {leaf(prior.log_beta), leaf(prior.log_beta_b)};
}

namespace {

void check_labels(const Tensor& features, std::span<const std::size_t> labels,
                  std::size_t num_classes) {
  if (features.rank() != 2) {
    throw DimensionError("features must be a matrix, got " + shape_string(features.shape()));
  }
  if (labels.size() != features.rows()) {
    throw DimensionError(std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " feature rows");
  }
  for (auto y : labels) {
    if (y >= num_classes) {
      throw ContractError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
  }
}

PriorNormAdjustment adjust(const Var& class_means, const Var& log_beta, PluginFault fault) {
  const Tensor& mu = class_means.value();
  if (mu.rank() != 2 || mu.rows() == 0 || mu.cols() == 0) {
    throw DimensionError("class means must be a non-empty matrix, got " + shape_string(mu.shape()));
  }
  const double num_classes = static_cast<double>(mu.rows());
  const double dim = static_cast<double>(mu.cols());
  // Flooring the mean square at 1e-24 floors the rms at 1e-12.
  Var rms = sqrt(clamp_min(sum(square(class_means)) / num_classes, 1e-24));
  const Var inv_beta =
      fault == PluginFault::inverted_beta_exponent ? exp(log_beta) : exp(-log_beta);
  Var variance = rms * inv_beta / std::sqrt(dim);
  return {variance, class_means / variance};
}

}  // namespace

LdaEstimates lda_ml_estimates(const Var& features, std::span<const std::size_t> labels,
                              std::size_t num_classes) {
  const Tensor& phi = features.value();
  check_labels(phi, labels, num_classes);
  const std::size_t n = phi.rows();
  const std::size_t d = phi.cols();
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto y : labels) ++counts[y];
  for (std::size_t j = 0; j < num_classes; ++j) {
    if (counts[j] == 0) throw ContractError("class " + std::to_string(j) + " has no support samples");
  }

  // Means as a constant averaging matrix applied to the features.
  Tensor averaging(Shape{num_classes, n});
  for (std::size_t i = 0; i < n; ++i) {
    averaging(labels[i], i) = 1.0 / static_cast<double>(counts[labels[i]]);
  }
  Var means = matmul(Var::constant(std::move(averaging)), features);

  Tensor priors(Shape{num_classes});
  for (std::size_t j = 0; j < num_classes; ++j) {
    priors[j] = static_cast<double>(counts[j]) / static_cast<double>(n);
  }

  double scatter = 0.0;
  const Tensor& mu = means.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < d; ++l) {
      const double diff = phi(i, l) - mu(labels[i], l);
      scatter += diff * diff;
    }
  }
  return {std::move(priors), std::move(means), scatter / static_cast<double>(n * d)};
}

PriorNormAdjustment prior_norm_adjust(const Var& class_means, const Var& log_beta) {
  return adjust(class_means, log_beta, PluginFault::none);
}

CenteredBiases center_biases(const Tensor& class_priors, const Var& class_means,
                             const Var& variance) {
  const std::size_t num_classes = class_priors.size();
  if (class_means.value().rows() != num_classes) {
    throw DimensionError("center_biases: " + std::to_string(num_classes) + " priors for " +
                         shape_string(class_means.shape()) + " means");
  }
  Tensor log_priors(Shape{num_classes});
  for (std::size_t j = 0; j < num_classes; ++j) {
    if (!(class_priors[j] > 0.0)) {
      throw ContractError("class prior " + std::to_string(j) + " is not positive");
    }
    log_priors[j] = std::log(class_priors[j]);
  }
  Var raw = Var::constant(std::move(log_priors)) - sum_rows(square(class_means)) / (2.0 * variance);
  Var alpha = -mean(raw);
  return {raw + alpha, alpha};
}

LaplaceVariances laplace_variances(const Var& features, const Var& weights, const Var& biases,
                                   const Var& log_beta, const Var& log_beta_b) {
  const Tensor& w = weights.value();
  if (w.rank() != 2 || features.value().cols() != w.cols() || biases.size() != w.rows()) {
    throw DimensionError("laplace_variances: features " + shape_string(features.shape()) +
                         ", weights " + shape_string(weights.shape()) + ", biases " +
                         shape_string(biases.shape()));
  }
  Var probs = softmax(add_row(matmul(features, transpose(weights)), biases));
  Var curvature = probs - square(probs);  // [n x C]
  Var weight_precision = matmul(transpose(curvature), square(features)) + exp(-2.0 * log_beta);
  Var bias_precision = sum_cols(curvature) + exp(-2.0 * log_beta_b);
  return {reciprocal(weight_precision), reciprocal(bias_precision)};
}

LaplacePosterior adapt(const Var& features, std::span<const std::size_t> labels,
                       std::size_t num_classes, const PriorVars& prior,
                       const AdaptOptions& options) {
  LaplacePosterior post;
  post.lda = lda_ml_estimates(features, labels, num_classes);
  auto adjusted = adjust(post.lda.class_means, prior.log_beta, options.fault);
  auto centered = center_biases(post.lda.class_priors, post.lda.class_means, adjusted.variance);
  auto variances = laplace_variances(features, adjusted.weights, centered.biases, prior.log_beta,
                                     prior.log_beta_b);
  post.variance = adjusted.variance;
  post.weights = adjusted.weights;
  post.biases = centered.biases;
  post.alpha = centered.alpha;
  post.weight_variances = variances.weights;
  post.bias_variances = variances.biases;
  return post;
}

McNoise draw_mc_noise(Rng& rng, std::size_t samples, std::size_t num_classes, std::size_t dim) {
  McNoise noise;
  noise.weights.reserve(samples);
  noise.biases.reserve(samples);
  for (std::size_t m = 0; m < samples; ++m) {
    noise.weights.push_back(normal_sample(rng, Shape{num_classes, dim}));
    noise.biases.push_back(normal_sample(rng, Shape{num_classes}));
  }
  return noise;
}

PredictiveDistribution predictive(const LaplacePosterior& posterior, const Var& query,
                                  const McNoise& noise) {
  const std::size_t samples = noise.samples();
  if (samples < 1) throw ContractError("predictive needs at least one Monte-Carlo sample");
  const Shape& wshape = posterior.weights.shape();
  if (query.value().rank() != 2 || query.value().cols() != wshape[1]) {
    throw DimensionError("query features " + shape_string(query.shape()) + " for weights " +
                         shape_string(wshape));
  }
  Var weight_std = sqrt(posterior.weight_variances);
  Var bias_std = sqrt(posterior.bias_variances);
  Var total;
  for (std::size_t m = 0; m < samples; ++m) {
    if (noise.weights[m].shape() != wshape || noise.biases[m].size() != wshape[0]) {
      throw DimensionError("Monte-Carlo noise does not match the posterior shape");
    }
    Var w = posterior.weights + weight_std * Var::constant(noise.weights[m]);
    Var b = posterior.biases + bias_std * Var::constant(noise.biases[m]);
    Var p = softmax(add_row(matmul(query, transpose(w)), b));
    total = m == 0 ? p : total + p;
  }
  return {total / static_cast<double>(samples), samples};
}

PredictiveDistribution predictive(const LaplacePosterior& posterior, const Var& query,
                                  std::size_t samples, Rng& rng) {
  if (samples < 1) throw ContractError("predictive needs at least one Monte-Carlo sample");
  const Shape& wshape = posterior.weights.shape();
  return predictive(posterior, query, draw_mc_noise(rng, samples, wshape[0], wshape[1]));
}

Var log_posterior(const Var& features, std::span<const std::size_t> labels, const Var& weights,
                  const Var& biases, const Var& log_beta, const Var& log_beta_b) {
  const Tensor& w = weights.value();
  check_labels(features.value(), labels, w.rows());
  if (w.cols() != features.value().cols() || biases.size() != w.rows()) {
    throw DimensionError("log_posterior: features " + shape_string(features.shape()) +
                         ", weights " + shape_string(weights.shape()) + ", biases " +
                         shape_string(biases.shape()));
  }
  Var prior = sum(square(weights)) * exp(-2.0 * log_beta) * 0.5 +
              sum(square(biases)) * exp(-2.0 * log_beta_b) * 0.5;
  Var logits = add_row(matmul(features, transpose(weights)), biases);
  Var data = sum(pick(logits, labels)) - sum(log_sum_exp_rows(logits));
  return data - prior;
}

Var query_nll(const Var& probs, std::span<const std::size_t> labels) {
  return -mean(log(pick(probs, labels)));
}

}  // namespace gpldla
