#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "gpldla/tensor.hpp"

// Straight-loop reference formulas used as independent oracles by the
// self-check command and the test suites. Nothing here touches the graph.
namespace gpldla::reference {

struct Plugin {
  std::vector<double> priors;
  Tensor means;    // [C x d]
  double variance = 0.0;
  Tensor weights;  // [C x d]
  std::vector<double> biases;
};

// LDA plugin with prior-norm adjusted variance and zero-mean biases.
Plugin lda_plugin(const Tensor& features, std::span<const std::size_t> labels,
                  std::size_t num_classes, double beta);

double log_posterior(const Tensor& features, std::span<const std::size_t> labels,
                     const Tensor& weights, std::span<const double> biases, double beta,
                     double beta_b);

// Diagonal of the negative Hessian of log_posterior w.r.t. every weight and
// bias, by second-order central differences with step h.
std::pair<Tensor, std::vector<double>> fd_negative_hessian_diagonal(
    const Tensor& features, std::span<const std::size_t> labels, const Tensor& weights,
    std::span<const double> biases, double beta, double beta_b, double h = 1e-4);

// Solves A X = B by Gaussian elimination with partial pivoting.
Tensor dense_solve(Tensor a, Tensor b);

}  // namespace gpldla::reference
