#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gpldla/backbone.hpp"
#include "gpldla/errors.hpp"
#include "gpldla/model.hpp"

namespace gpldla {

// Unreadable or structurally invalid checkpoint file.
class CheckpointError : public ParseError {
 public:
  using ParseError::ParseError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary little-endian layout: "GPLD", u32 version, then per tensor
// u32 name length, name bytes, u32 rank, u64 extents, f64 values. Tensors
// run to end of file.
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Backbone tensors plus prior.log_beta, prior.log_beta_b and head.log_noise.
std::vector<NamedTensor> model_tensors(const Model& model);

// Rebuilds a model; throws ValidationError if names or shapes do not match
// what `spec` declares.
Model model_from_tensors(const std::vector<NamedTensor>& tensors, const BackboneSpec& spec,
                         HeadKind head);

}  // namespace gpldla
