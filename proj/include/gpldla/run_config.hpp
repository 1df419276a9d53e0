#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gpldla/backbone.hpp"
#include "gpldla/data.hpp"
#include "gpldla/errors.hpp"
#include "gpldla/model.hpp"
#include "gpldla/trainer.hpp"

namespace gpldla {

// Invalid or unreadable run configuration; the message names the field.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class DataSource { synthetic, csv };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  SyntheticTaskConfig synthetic;
  std::string csv_path;
  std::string split_path;
  bool header = false;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct EvalConfig {
  std::size_t episodes = 200;        // accuracy episodes
  std::size_t calib_episodes = 300;  // temperature fitting
  std::size_t ece_episodes = 300;    // ECE reporting, disjoint seeds
  std::size_t bins = 20;
  std::size_t mc_samples = 10;
  std::uint64_t seed = 1;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

// Fully resolved settings of one run. The train section's seed mirrors the
// top-level seed.
struct RunConfig {
  std::uint64_t seed = 0;
  HeadKind head = HeadKind::gpldla;
  std::vector<HeadKind> compare_heads{HeadKind::gpldla, HeadKind::protonet};
  std::string out_dir = "run";
  std::size_t workers = 0;  // 0: one per logical core
  DataConfig data;
  BackboneSpec backbone;
  TrainConfig train;
  EvalConfig eval;

  std::size_t resolved_workers() const;
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Parses `key = value` lines grouped under `[section]` headers. Values are
// integers, floats, booleans, double-quoted strings or arrays of strings.
// Unknown keys and ill-typed values raise ConfigError.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical text form; parse_run_config(to_toml(c)) == c.
std::string to_toml(const RunConfig& config);

DatasetSplit load_data(const DataConfig& data);

}  // namespace gpldla
