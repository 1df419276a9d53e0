#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gpldla/rng.hpp"
#include "gpldla/tensor.hpp"

namespace gpldla {

// Feature rows with episode-local labels in [0, C).
struct LabeledSet {
  Tensor features;  // [n x d_in]
  std::vector<std::size_t> labels;
};

struct EpisodeShape {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 15;

  std::size_t samples_per_class() const { return shots + queries; }

  friend bool operator==(const EpisodeShape&, const EpisodeShape&) = default;
};

// One C-way k-shot task. Rows are grouped by class in local-label order.
struct Episode {
  LabeledSet support;  // ways * shots rows
  LabeledSet query;    // ways * queries rows
  EpisodeShape shape;
  // Global class id behind each local label (sorted ascending).
  std::vector<std::int64_t> class_ids;
};

enum class SplitTag { train, val, test };

const char* to_string(SplitTag tag);

// Class-partitioned feature table with a disjoint train/val/test class split.
class DatasetSplit {
 public:
  DatasetSplit(std::size_t input_dim, std::map<std::int64_t, Tensor> classes,
               std::vector<std::int64_t> train, std::vector<std::int64_t> val,
               std::vector<std::int64_t> test);

  std::size_t input_dim() const { return input_dim_; }
  const std::vector<std::int64_t>& class_ids(SplitTag tag) const;
  // Samples of one class, [n_c x d_in].
  const Tensor& samples(std::int64_t class_id) const;
  std::size_t total_samples() const;

 private:
  std::size_t input_dim_;
  std::map<std::int64_t, Tensor> classes_;
  std::vector<std::int64_t> train_, val_, test_;
};

struct SyntheticTaskConfig {
  std::size_t input_dim = 16;
  std::size_t train_classes = 24;
  std::size_t val_classes = 8;
  std::size_t test_classes = 8;
  std::size_t samples_per_class = 60;
  double center_scale = 5.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;

  std::size_t latent_classes() const { return train_classes + val_classes + test_classes; }

  friend bool operator==(const SyntheticTaskConfig&, const SyntheticTaskConfig&) = default;
};

// Gaussian class clusters: centers ~ N(0, center_scale^2 I), samples ~
// N(center, noise_scale^2 I). Class ids are 0..latent-1, split in order.
DatasetSplit generate_synthetic_pool(const SyntheticTaskConfig& cfg);

// Reads a feature CSV (d_in floats then an integer class id per row) and a
// split file with `train:`, `val:` and `test:` lines of class ids.
DatasetSplit load_dataset(const std::filesystem::path& csv_path,
                          const std::filesystem::path& split_path, bool has_header = false);

// Draws `ways` distinct classes uniformly, then shots + queries distinct
// samples per class; the first `shots` go to the support set.
Episode sample_episode(const DatasetSplit& split, SplitTag tag, const EpisodeShape& shape,
                       Rng& rng);

}  // namespace gpldla
