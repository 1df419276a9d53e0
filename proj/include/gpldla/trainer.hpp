#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gpldla/data.hpp"
#include "gpldla/errors.hpp"
#include "gpldla/model.hpp"

namespace gpldla {

struct TrainConfig {
  std::size_t episodes = 2000;
  EpisodeShape shape;
  std::size_t mc_samples = 10;
  double lr_theta = 0.002;
  double lr_prior = 0.005;
  std::size_t step_epochs = 5;
  double decay = 0.5;
  std::size_t epoch_length = 100;  // episodes per epoch
  std::size_t val_episodes = 100;  // 0 disables validation
  bool clip_gradients = false;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // validation only

  // Throws ValidationError naming the offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpisodeRecord {
  std::size_t episode = 0;  // 1-based
  double loss = 0.0;
  double lr_theta = 0.0;
  double lr_prior = 0.0;
  double beta = 0.0;
  double beta_b = 0.0;
};

struct ValidationRecord {
  std::size_t epoch = 0;  // completed epochs
  double val_acc = 0.0;
  double val_ci95 = 0.0;
};

using LogRecord = std::variant<EpisodeRecord, ValidationRecord>;

std::string to_json_line(const LogRecord& record);

struct TrainResult {
  Model final_model;
  // Highest validation accuracy; equals final_model when never validated.
  Model best_model;
  std::optional<std::size_t> best_epoch;
  double best_val_acc = 0.0;
  std::vector<LogRecord> log;
};

// Raised when an episode produces a non-finite loss or gradient.
class NumericalAbort : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Episodic meta-training with one Adam step per episode. The backbone and
// the head scalars are separate parameter groups with their own learning
// rates, both decayed by the same step schedule.
TrainResult train(const TrainConfig& config, const DatasetSplit& split, Model model,
                  const std::function<void(const LogRecord&)>& on_record = {});

// Seeds of the training and validation episode streams of a run.
std::uint64_t train_stream_seed(std::uint64_t run_seed);
std::uint64_t validation_stream_seed(std::uint64_t run_seed);

}  // namespace gpldla
