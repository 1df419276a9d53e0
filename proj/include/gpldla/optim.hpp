#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gpldla/tensor.hpp"

namespace gpldla {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment accumulators for one parameter group.
struct OptimizerState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::size_t step = 0;
};

// One bias-corrected Adam update applied in place. Moments are allocated on
// the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               OptimizerState& state, double lr, const AdamConfig& config = {});

// Step decay: base_lr * factor^floor(epoch / step_size).
double lr_schedule(double base_lr, std::size_t epoch, std::size_t step_size, double factor);

// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> grads, double max_norm);

}  // namespace gpldla
