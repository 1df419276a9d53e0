#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gpldla/autodiff.hpp"
#include "gpldla/rng.hpp"
#include "gpldla/tensor.hpp"

namespace gpldla {

enum class Architecture { identity, linear, mlp };
enum class Activation { relu, tanh };

const char* to_string(Architecture a);
const char* to_string(Activation a);
Architecture parse_architecture(const std::string& s);
Activation parse_activation(const std::string& s);

struct BackboneSpec {
  Architecture arch = Architecture::mlp;
  std::size_t input_dim = 16;
  std::size_t hidden = 64;  // mlp only; 0 degenerates to linear
  std::size_t output_dim = 32;
  Activation activation = Activation::relu;
  bool normalize = true;

  // Feature width produced by forward().
  std::size_t feature_dim() const;
  // Effective layer count (0 for identity).
  std::size_t layers() const;

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Weights are stored [fan_in x fan_out] and applied as x W + b.
struct BackboneParams {
  BackboneSpec spec;
  std::vector<NamedTensor> tensors;  // w0, b0, w1, b1, ... in layer order

  // One graph leaf per tensor, in the same order.
  std::vector<Var> leaves(bool requires_grad = true) const;
};

// Weights ~ N(0, 1/fan_in), biases 0.
BackboneParams init_params(const BackboneSpec& spec, Rng& rng);

// Row-wise feature map on the graph. `leaves` must come from
// BackboneParams::leaves() (or match its shapes).
Var forward(const BackboneSpec& spec, std::span<const Var> leaves, const Var& x);

Tensor forward(const BackboneParams& params, const Tensor& x);

// Rows rescaled to unit norm, dividing by (norm + 1e-12).
Var normalize_rows(const Var& x);

}  // namespace gpldla
