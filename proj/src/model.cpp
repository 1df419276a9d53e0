#include "gpldla/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gpldla/baselines.hpp"
#include "gpldla/errors.hpp"

namespace gpldla {

const char* to_string(HeadKind head) {
  switch (head) {
    case HeadKind::gpldla: return "gpldla";
    case HeadKind::protonet: return "protonet";
    case HeadKind::gpdkt: return "gpdkt";
  }
  return "?";
}

HeadKind parse_head(const std::string& s) {
  if (s == "gpldla") return HeadKind::gpldla;
  if (s == "protonet") return HeadKind::protonet;
  if (s == "gpdkt") return HeadKind::gpdkt;
  throw ValidationError("unknown head '" + s + "' (gpldla|protonet|gpdkt)");
}

Model init_model(HeadKind head, const BackboneSpec& spec, Rng& rng) {
  Model m;
  m.head = head;
  m.backbone = init_params(spec, rng);
  return m;
}

ModelLeaves ModelLeaves::from(const Model& model, bool requires_grad) {
  ModelLeaves leaves;
  leaves.backbone = model.backbone.leaves(requires_grad);
  leaves.prior = PriorVars::from(model.prior, requires_grad);
  leaves.log_noise = requires_grad ? Var::parameter(Tensor::scalar(model.log_noise))
                                   : Var::constant(Tensor::scalar(model.log_noise));
  return leaves;
}

EpisodeView view_of(const Episode& episode) {
  return {Var::constant(episode.support.features), episode.support.labels,
          Var::constant(episode.query.features), episode.query.labels, episode.shape.ways};
}

Var episode_loss(HeadKind head, const BackboneSpec& spec, const ModelLeaves& leaves,
                 const EpisodeView& ep, const McNoise& noise) {
  const std::size_t n_support = ep.support.value().rows();
  const std::size_t n_total = n_support + ep.query.value().rows();
  Var features = forward(spec, leaves.backbone, concat_rows(ep.support, ep.query));
  Var support = slice_rows(features, 0, n_support);
  Var query = slice_rows(features, n_support, n_total);

  switch (head) {
    case HeadKind::gpldla: {
      const auto posterior = adapt(support, ep.support_labels, ep.ways, leaves.prior);
      return query_nll(predictive(posterior, query, noise).probs, ep.query_labels);
    }
    case HeadKind::protonet: {
      Var logits = protonet_logits(support, ep.support_labels, ep.ways, query);
      return mean(log_sum_exp_rows(logits) - pick(logits, ep.query_labels));
    }
    case HeadKind::gpdkt: {
      std::vector<std::size_t> labels(ep.support_labels.begin(), ep.support_labels.end());
      labels.insert(labels.end(), ep.query_labels.begin(), ep.query_labels.end());
      const Tensor targets = one_vs_rest_targets(labels, ep.ways);
      Var loglik = gpdkt_marginal_loglik(features, targets, leaves.prior.log_beta,
                                         leaves.prior.log_beta_b, leaves.log_noise);
      return -loglik / static_cast<double>(n_total);
    }
  }
  throw ContractError("unknown head");
}

Var episode_loss(const Model& model, const ModelLeaves& leaves, const Episode& episode,
                 const McNoise& noise) {
  return episode_loss(model.head, model.backbone.spec, leaves, view_of(episode), noise);
}

Tensor query_scores(const Model& model, const Episode& episode, std::size_t mc_samples,
                    Rng& rng) {
  const Tensor support = forward(model.backbone, episode.support.features);
  const Tensor query = forward(model.backbone, episode.query.features);
  const std::size_t ways = episode.shape.ways;
  switch (model.head) {
    case HeadKind::gpldla: {
      const auto prior = PriorVars::from(model.prior, false);
      const auto posterior = adapt(Var::constant(support), episode.support.labels, ways, prior);
      Tensor probs =
          predictive(posterior, Var::constant(query), mc_samples, rng).probs.value();
      // Floored so an underflowed probability still yields a finite score.
      for (double& p : probs.data()) p = std::log(std::max(p, 1e-300));
      return probs;
    }
    case HeadKind::protonet:
      return protonet_logits(Var::constant(support), episode.support.labels, ways,
                             Var::constant(query))
          .value();
    case HeadKind::gpdkt: {
      KernelConfig kernel;
      kernel.cosine = true;
      kernel.scale = std::exp(2.0 * model.prior.log_beta);
      kernel.offset = std::exp(2.0 * model.prior.log_beta_b);
      kernel.noise = std::exp(model.log_noise);
      const auto fitted = gp_regression_fit(support, episode.support.labels, ways, kernel);
      return gp_regression_predict(fitted, query);
    }
  }
  throw ContractError("unknown head");
}

std::string parameter_summary(const Model& model) {
  std::ostringstream out;
  out.precision(6);
  for (const auto& t : model.backbone.tensors) {
    double s = 0.0;
    for (double x : t.value.data()) s += x * x;
    out << t.name << " |.|=" << std::sqrt(s) << " ";
  }
  out << "log_beta=" << model.prior.log_beta << " log_beta_b=" << model.prior.log_beta_b
      << " log_noise=" << model.log_noise;
  return out.str();
}

}  // namespace gpldla
