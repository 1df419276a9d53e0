#include "gpldla/finite_diff.hpp"

#include <cmath>
#include <string>

#include "gpldla/errors.hpp"

namespace gpldla {

Tensor finite_diff_grad(const ScalarFunction& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad needs h > 0");
  auto eval = [&](const Tensor& at, std::size_t i) {
    const double v = f(at);
    if (!std::isfinite(v)) {
      throw NumericalError("non-finite function value while differencing coordinate " +
                           std::to_string(i));
    }
    return v;
  };
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = eval(probe, i);
    probe[i] = x[i] - h;
    const double down = eval(probe, i);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace gpldla
