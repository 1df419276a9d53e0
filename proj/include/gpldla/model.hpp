#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gpldla/autodiff.hpp"
#include "gpldla/backbone.hpp"
#include "gpldla/data.hpp"
#include "gpldla/gpldla_head.hpp"
#include "gpldla/rng.hpp"

namespace gpldla {

enum class HeadKind { gpldla, protonet, gpdkt };

const char* to_string(HeadKind head);
HeadKind parse_head(const std::string& s);

// Everything meta-training updates: the backbone and the head's scalars.
struct Model {
  HeadKind head = HeadKind::gpldla;
  BackboneParams backbone;
  GpPrior prior;          // gpldla prior; kernel scale/offset for gpdkt
  double log_noise = -2.302585092994046;  // log 0.1, gpdkt only
};

Model init_model(HeadKind head, const BackboneSpec& spec, Rng& rng);

// Per-episode graph leaves for a model.
struct ModelLeaves {
  std::vector<Var> backbone;
  PriorVars prior;
  Var log_noise;

  static ModelLeaves from(const Model& model, bool requires_grad = true);
};

// Raw episode inputs as graph values, so gradients can reach the inputs.
struct EpisodeView {
  Var support;
  std::span<const std::size_t> support_labels;
  Var query;
  std::span<const std::size_t> query_labels;
  std::size_t ways = 0;
};

EpisodeView view_of(const Episode& episode);

// Meta-training loss of one episode:
//  gpldla   - mean -log of the MC-averaged predictive probability of the true class
//  protonet - query cross-entropy of the centroid logits
//  gpdkt    - negative one-vs-rest marginal likelihood on S and Q, per sample
// `noise` is only read by gpldla.
Var episode_loss(HeadKind head, const BackboneSpec& spec, const ModelLeaves& leaves,
                 const EpisodeView& episode, const McNoise& noise);

Var episode_loss(const Model& model, const ModelLeaves& leaves, const Episode& episode,
                 const McNoise& noise);

// Pre-softmax class scores for the query set, [n_q x C]: log MC-averaged
// probabilities (gpldla), negative squared distances (protonet) or GP
// predictive means (gpdkt). The head's predictive is softmax(scores).
Tensor query_scores(const Model& model, const Episode& episode, std::size_t mc_samples,
                    Rng& rng);

// Norms of every trainable tensor, for diagnostics.
std::string parameter_summary(const Model& model);

}  // namespace gpldla
