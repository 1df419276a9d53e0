#include "gpldla/reference.hpp"

#include <cmath>
#include <stdexcept>

#include "gpldla/errors.hpp"

namespace gpldla::reference {

Plugin lda_plugin(const Tensor& features, std::span<const std::size_t> labels,
                  std::size_t num_classes, double beta) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  Plugin p;
  p.priors.assign(num_classes, 0.0);
  p.means = Tensor(Shape{num_classes, d});
  std::vector<double> counts(num_classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    counts[labels[i]] += 1.0;
    for (std::size_t l = 0; l < d; ++l) p.means(labels[i], l) += features(i, l);
  }
  double mean_sq = 0.0;
  for (std::size_t j = 0; j < num_classes; ++j) {
    p.priors[j] = counts[j] / static_cast<double>(n);
    for (std::size_t l = 0; l < d; ++l) {
      p.means(j, l) /= counts[j];
      mean_sq += p.means(j, l) * p.means(j, l);
    }
  }
  mean_sq /= static_cast<double>(num_classes);
  p.variance = std::sqrt(mean_sq) / (beta * std::sqrt(static_cast<double>(d)));
  p.weights = p.means;
  for (double& x : p.weights.data()) x /= p.variance;

  std::vector<double> raw(num_classes);
  double raw_mean = 0.0;
  for (std::size_t j = 0; j < num_classes; ++j) {
    double sq = 0.0;
    for (std::size_t l = 0; l < d; ++l) sq += p.means(j, l) * p.means(j, l);
    raw[j] = std::log(p.priors[j]) - sq / (2.0 * p.variance);
    raw_mean += raw[j] / static_cast<double>(num_classes);
  }
  p.biases.resize(num_classes);
  for (std::size_t j = 0; j < num_classes; ++j) p.biases[j] = raw[j] - raw_mean;
  return p;
}

double log_posterior(const Tensor& features, std::span<const std::size_t> labels,
                     const Tensor& weights, std::span<const double> biases, double beta,
                     double beta_b) {
  const std::size_t c = weights.rows();
  const std::size_t d = weights.cols();
  double prior = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t l = 0; l < d; ++l) prior += weights(j, l) * weights(j, l) / (2.0 * beta * beta);
    prior += biases[j] * biases[j] / (2.0 * beta_b * beta_b);
  }
  double data = 0.0;
  std::vector<double> f(c);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) {
      f[j] = biases[j];
      for (std::size_t l = 0; l < d; ++l) f[j] += weights(j, l) * features(i, l);
      mx = std::max(mx, f[j]);
    }
    double s = 0.0;
    for (double v : f) s += std::exp(v - mx);
    data += f[labels[i]] - (mx + std::log(s));
  }
  return data - prior;
}

std::pair<Tensor, std::vector<double>> fd_negative_hessian_diagonal(
    const Tensor& features, std::span<const std::size_t> labels, const Tensor& weights,
    std::span<const double> biases, double beta, double beta_b, double h) {
  Tensor w = weights;
  std::vector<double> b(biases.begin(), biases.end());
  auto f = [&] { return log_posterior(features, labels, w, b, beta, beta_b); };
  const double f0 = f();
  auto second = [&](double& x) {
    const double x0 = x;
    x = x0 + h;
    const double up = f();
    x = x0 - h;
    const double down = f();
    x = x0;
    return -(up - 2.0 * f0 + down) / (h * h);
  };
  Tensor hw(weights.shape());
  for (std::size_t i = 0; i < w.size(); ++i) hw[i] = second(w[i]);
  std::vector<double> hb(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) hb[j] = second(b[j]);
  return {std::move(hw), std::move(hb)};
}

Tensor dense_solve(Tensor a, Tensor b) {
  const std::size_t n = a.rows();
  if (b.rank() == 1) b = Tensor(Shape{b.size(), 1}, std::vector<double>(b.data().begin(), b.data().end()));
  const std::size_t m = b.cols();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) throw NumericalError("singular matrix in dense_solve");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      for (std::size_t j = 0; j < m; ++j) std::swap(b(k, j), b(piv, j));
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double factor = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= factor * a(k, j);
      for (std::size_t j = 0; j < m; ++j) b(i, j) -= factor * b(k, j);
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t ii = n; ii-- > 0;) {
      double s = b(ii, c);
      for (std::size_t j = ii + 1; j < n; ++j) s -= a(ii, j) * b(j, c);
      b(ii, c) = s / a(ii, ii);
    }
  }
  return b;
}

}  // namespace gpldla::reference
