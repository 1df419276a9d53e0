#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gpldla/data.hpp"
#include "gpldla/model.hpp"
#include "gpldla/tensor.hpp"

namespace gpldla {

struct AccuracyReport {
  double mean = 0.0;
  // 1.96 * population std / sqrt(n); 0 for a single episode.
  double ci95 = 0.0;
  std::vector<double> per_episode;
};

// Query scores and ground truth of one evaluated episode.
struct EpisodeScores {
  Tensor scores;  // [n_q x C], pre-softmax
  std::vector<std::size_t> labels;
};

// Maps an episode (and its private rng, already advanced past sampling) to
// an [n_q x C] score or probability matrix; predictions are row argmaxes.
using EpisodePredictor = std::function<Tensor(const Episode&, Rng&)>;

// Seed of evaluation episode `index` in a run seeded with `seed`.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t index);

// Samples `episodes` tasks from the split, each from its own derived seed,
// and scores every one with the predictor. Output order is the episode index
// regardless of the worker count.
std::vector<EpisodeScores> collect_scores(const DatasetSplit& split, SplitTag tag,
                                          std::size_t episodes, const EpisodeShape& shape,
                                          std::uint64_t seed, const EpisodePredictor& predictor,
                                          std::size_t workers = 1);

std::vector<EpisodeScores> collect_scores(const Model& model, const DatasetSplit& split,
                                          SplitTag tag, std::size_t episodes,
                                          const EpisodeShape& shape, std::size_t mc_samples,
                                          std::uint64_t seed, std::size_t workers = 1);

double episode_accuracy(const EpisodeScores& e);
AccuracyReport summarize_accuracy(std::span<const EpisodeScores> episodes);

AccuracyReport evaluate_accuracy(const DatasetSplit& split, SplitTag tag, std::size_t episodes,
                                 const EpisodeShape& shape, std::uint64_t seed,
                                 const EpisodePredictor& predictor, std::size_t workers = 1);

AccuracyReport evaluate_accuracy(const Model& model, const DatasetSplit& split, SplitTag tag,
                                 std::size_t episodes, const EpisodeShape& shape,
                                 std::size_t mc_samples, std::uint64_t seed,
                                 std::size_t workers = 1);

struct CalibrationBin {
  double confidence = 0.0;  // mean confidence in the bin
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;  // equal-width on [0, 1]
  double ece = 0.0;
  double temperature = 1.0;
};

// Expected calibration error over equal-width confidence bins.
CalibrationReport compute_ece(std::span<const double> confidences,
                              const std::vector<bool>& correct, std::size_t bins = 20);

// Mean negative log-likelihood of softmax(scores / temperature).
double temperature_nll(const Tensor& scores, std::span<const std::size_t> labels,
                       double temperature);

// Temperature minimizing the NLL, by golden-section search over log T in
// [-4, 4]. Never worse than T = 1.
double fit_temperature(const Tensor& scores, std::span<const std::size_t> labels);

// Stacks per-episode score matrices into one [N x C] matrix and label list.
std::pair<Tensor, std::vector<std::size_t>> stack_scores(std::span<const EpisodeScores> episodes);

// Max-probability confidence and correctness after temperature scaling.
CalibrationReport calibration_report(const Tensor& scores, std::span<const std::size_t> labels,
                                     double temperature, std::size_t bins = 20);

}  // namespace gpldla
