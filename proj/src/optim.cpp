#include "gpldla/optim.hpp"

#include <cmath>

#include "gpldla/errors.hpp"

namespace gpldla {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               OptimizerState& state, double lr, const AdamConfig& config) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.first.empty()) {
    for (const Tensor* p : params) {
      state.first.emplace_back(p->shape());
      state.second.emplace_back(p->shape());
    }
  }
  if (state.first.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks a different parameter group");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (g.size() != p.size()) {
      throw DimensionError("adam_step: gradient " + shape_string(g.shape()) + " for parameter " +
                           shape_string(p.shape()));
    }
    Tensor& m = state.first[k];
    Tensor& v = state.second[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

double lr_schedule(double base_lr, std::size_t epoch, std::size_t step_size, double factor) {
  if (step_size == 0) throw ContractError("lr_schedule step size must be positive");
  return base_lr * std::pow(factor, static_cast<double>(epoch / step_size));
}

double clip_grad_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double x : g.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Tensor& g : grads)
      for (double& x : g.data()) x *= s;
  }
  return norm;
}

}  // namespace gpldla
