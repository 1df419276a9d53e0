#include "gpldla/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "gpldla/errors.hpp"
#include "gpldla/parallel.hpp"

namespace gpldla {

std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) {
  return Rng::derive(seed, index);
}

std::vector<EpisodeScores> collect_scores(const DatasetSplit& split, SplitTag tag,
                                          std::size_t episodes, const EpisodeShape& shape,
                                          std::uint64_t seed, const EpisodePredictor& predictor,
                                          std::size_t workers) {
  std::vector<EpisodeScores> out(episodes);
  parallel_for(episodes, workers, [&](std::size_t i) {
    Rng rng(episode_seed(seed, i));
    const Episode ep = sample_episode(split, tag, shape, rng);
    Tensor scores = predictor(ep, rng);
    if (scores.rows() != ep.query.labels.size() || scores.cols() != shape.ways) {
      throw DimensionError("predictor returned " + shape_string(scores.shape()) + " for " +
                           std::to_string(ep.query.labels.size()) + " queries");
    }
    out[i] = {std::move(scores), ep.query.labels};
  });
  return out;
}

std::vector<EpisodeScores> collect_scores(const Model& model, const DatasetSplit& split,
                                          SplitTag tag, std::size_t episodes,
                                          const EpisodeShape& shape, std::size_t mc_samples,
                                          std::uint64_t seed, std::size_t workers) {
  return collect_scores(
      split, tag, episodes, shape, seed,
      [&](const Episode& ep, Rng& rng) { return query_scores(model, ep, mc_samples, rng); },
      workers);
}

double episode_accuracy(const EpisodeScores& e) {
  const auto pred = argmax_rows(e.scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == e.labels[i];
  return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

AccuracyReport summarize_accuracy(std::span<const EpisodeScores> episodes) {
  AccuracyReport r;
  if (episodes.empty()) throw ContractError("accuracy over zero episodes");
  for (const auto& e : episodes) r.per_episode.push_back(episode_accuracy(e));
  const double n = static_cast<double>(r.per_episode.size());
  double s = 0.0;
  for (double a : r.per_episode) s += a;
  r.mean = s / n;
  double var = 0.0;
  for (double a : r.per_episode) var += (a - r.mean) * (a - r.mean);
  var /= n;
  r.ci95 = 1.96 * std::sqrt(var) / std::sqrt(n);
  return r;
}

AccuracyReport evaluate_accuracy(const DatasetSplit& split, SplitTag tag, std::size_t episodes,
                                 const EpisodeShape& shape, std::uint64_t seed,
                                 const EpisodePredictor& predictor, std::size_t workers) {
  return summarize_accuracy(collect_scores(split, tag, episodes, shape, seed, predictor, workers));
}

AccuracyReport evaluate_accuracy(const Model& model, const DatasetSplit& split, SplitTag tag,
                                 std::size_t episodes, const EpisodeShape& shape,
                                 std::size_t mc_samples, std::uint64_t seed,
                                 std::size_t workers) {
  return summarize_accuracy(
      collect_scores(model, split, tag, episodes, shape, mc_samples, seed, workers));
}

CalibrationReport compute_ece(std::span<const double> confidences,
                              const std::vector<bool>& correct, std::size_t bins) {
  if (confidences.empty()) throw ContractError("ECE of an empty prediction set");
  if (confidences.size() != correct.size()) {
    throw DimensionError("ECE: " + std::to_string(confidences.size()) + " confidences, " +
                         std::to_string(correct.size()) + " outcomes");
  }
  if (bins == 0) throw ContractError("ECE needs at least one bin");
  std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
  std::vector<std::size_t> counts(bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw ContractError("confidence outside [0, 1]");
    const auto b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
    conf_sum[b] += c;
    hit_sum[b] += correct[i] ? 1.0 : 0.0;
    ++counts[b];
  }
  CalibrationReport report;
  report.bins.resize(bins);
  const double total = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < bins; ++b) {
    auto& bin = report.bins[b];
    bin.count = counts[b];
    if (counts[b] == 0) continue;
    const double n = static_cast<double>(counts[b]);
    bin.confidence = conf_sum[b] / n;
    bin.accuracy = hit_sum[b] / n;
    report.ece += n / total * std::abs(bin.accuracy - bin.confidence);
  }
  return report;
}

double temperature_nll(const Tensor& scores, std::span<const std::size_t> labels,
                       double temperature) {
  if (scores.rank() != 2 || scores.rows() != labels.size() || scores.rows() == 0) {
    throw DimensionError("temperature_nll: scores " + shape_string(scores.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  double nll = 0.0;
  std::vector<double> row(scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto s = scores.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = s[j] / temperature;
    nll += log_sum_exp(row) - row[labels[i]];
  }
  return nll / static_cast<double>(scores.rows());
}

double fit_temperature(const Tensor& scores, std::span<const std::size_t> labels) {
  if (scores.rank() != 2 || scores.cols() < 2) {
    throw ContractError("temperature fitting needs scores for at least two classes");
  }
  if (scores.rows() != labels.size() || labels.empty()) {
    throw DimensionError("fit_temperature: scores " + shape_string(scores.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  for (auto y : labels) {
    if (y >= scores.cols()) throw ContractError("label outside the score columns");
  }
  auto objective = [&](double log_t) { return temperature_nll(scores, labels, std::exp(log_t)); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -4.0, hi = 4.0;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = objective(x1), f2 = objective(x2);
  for (int it = 0; it < 80 && hi - lo > 1e-9; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = objective(x2);
    }
  }
  const double best = 0.5 * (lo + hi);
  return objective(best) <= objective(0.0) ? std::exp(best) : 1.0;
}

std::pair<Tensor, std::vector<std::size_t>> stack_scores(std::span<const EpisodeScores> episodes) {
  if (episodes.empty()) throw ContractError("no episodes to stack");
  const std::size_t cols = episodes.front().scores.cols();
  std::vector<double> data;
  std::vector<std::size_t> labels;
  for (const auto& e : episodes) {
    if (e.scores.cols() != cols) throw DimensionError("episodes disagree on class count");
    data.insert(data.end(), e.scores.data().begin(), e.scores.data().end());
    labels.insert(labels.end(), e.labels.begin(), e.labels.end());
  }
  const std::size_t rows = labels.size();
  return {Tensor(Shape{rows, cols}, std::move(data)), std::move(labels)};
}

CalibrationReport calibration_report(const Tensor& scores, std::span<const std::size_t> labels,
                                     double temperature, std::size_t bins) {
  if (scores.rows() != labels.size()) {
    throw DimensionError("calibration_report: scores/labels mismatch");
  }
  Tensor scaled = scores;
  for (double& x : scaled.data()) x /= temperature;
  const Tensor probs = softmax(scaled);
  // Predictions come from the unscaled scores so accuracy cannot move with T.
  const auto pred = argmax_rows(scores);
  std::vector<double> conf(scores.rows());
  std::vector<bool> correct(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    conf[i] = std::clamp(probs(i, pred[i]), 0.0, 1.0);
    correct[i] = pred[i] == labels[i];
  }
  auto report = compute_ece(conf, correct, bins);
  report.temperature = temperature;
  return report;
}

}  // namespace gpldla
