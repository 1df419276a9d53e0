#pragma once

#include <functional>

#include "gpldla/tensor.hpp"

namespace gpldla {

using ScalarFunction = std::function<double(const Tensor&)>;

// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h.
// Throws NumericalError if f returns a non-finite value.
Tensor finite_diff_grad(const ScalarFunction& f, const Tensor& x, double h = 1e-5);

}  // namespace gpldla
