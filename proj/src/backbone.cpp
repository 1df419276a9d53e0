#include "gpldla/backbone.hpp"

#include <cmath>

#include "gpldla/errors.hpp"

namespace gpldla {

const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::identity: return "identity";
    case Architecture::linear: return "linear";
    case Architecture::mlp: return "mlp";
  }
  return "?";
}

const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Architecture parse_architecture(const std::string& s) {
  if (s == "identity") return Architecture::identity;
  if (s == "linear") return Architecture::linear;
  if (s == "mlp") return Architecture::mlp;
  throw ValidationError("unknown architecture '" + s + "' (identity|linear|mlp)");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ValidationError("unknown activation '" + s + "' (relu|tanh)");
}

std::size_t BackboneSpec::feature_dim() const {
  return arch == Architecture::identity ? input_dim : output_dim;
}

std::size_t BackboneSpec::layers() const {
  switch (arch) {
    case Architecture::identity: return 0;
    case Architecture::linear: return 1;
    case Architecture::mlp: return hidden == 0 ? 1 : 2;
  }
  return 0;
}

std::vector<Var> BackboneParams::leaves(bool requires_grad) const {
  std::vector<Var> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) {
    out.push_back(requires_grad ? Var::parameter(t.value) : Var::constant(t.value));
  }
  return out;
}

BackboneParams init_params(const BackboneSpec& spec, Rng& rng) {
  if (spec.input_dim == 0 || (spec.arch != Architecture::identity && spec.output_dim == 0)) {
    throw ContractError("backbone dimensions must be positive");
  }
  BackboneParams params{spec, {}};
  std::vector<std::size_t> widths{spec.input_dim};
  if (spec.layers() == 2) widths.push_back(spec.hidden);
  if (spec.layers() >= 1) widths.push_back(spec.output_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w = normal_sample(rng, Shape{fan_in, widths[l + 1]});
    for (double& x : w.data()) x *= scale;
    params.tensors.push_back({"backbone.w" + std::to_string(l), std::move(w)});
    params.tensors.push_back({"backbone.b" + std::to_string(l), Tensor(Shape{widths[l + 1]})});
  }
  return params;
}

Var normalize_rows(const Var& x) {
  return div_col(x, sqrt(sum_rows(square(x))) + 1e-12);
}

Var forward(const BackboneSpec& spec, std::span<const Var> leaves, const Var& x) {
  if (x.value().rank() != 2 || x.value().cols() != spec.input_dim) {
    throw DimensionError("backbone expects [n x " + std::to_string(spec.input_dim) + "] input, got " +
                         shape_string(x.shape()));
  }
  const std::size_t layers = spec.layers();
  if (leaves.size() != 2 * layers) {
    throw DimensionError("backbone expects " + std::to_string(2 * layers) + " tensors, got " +
                         std::to_string(leaves.size()));
  }
  Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_row(matmul(h, leaves[2 * l]), leaves[2 * l + 1]);
    if (l + 1 < layers) h = spec.activation == Activation::relu ? relu(h) : tanh(h);
  }
  return spec.normalize ? normalize_rows(h) : h;
}

Tensor forward(const BackboneParams& params, const Tensor& x) {
  const auto leaves = params.leaves(false);
  return forward(params.spec, leaves, Var::constant(x)).value();
}

}  // namespace gpldla
