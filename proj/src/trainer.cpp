#include "gpldla/trainer.hpp"

#include <cmath>

#include "json.hpp"
#include <spdlog/spdlog.h>

#include "gpldla/evaluation.hpp"
#include "gpldla/optim.hpp"

namespace gpldla {

namespace {

constexpr std::uint64_t kTrainStream = 0x7472'6169'6eULL;
constexpr std::uint64_t kValStream = 0x7661'6cULL;

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ValidationError("train." + field + ": " + rule);
}

}  // namespace

void TrainConfig::validate() const {
  require(shape.ways >= 2, "way", "must be at least 2");
  require(shape.shots >= 1, "shot", "must be at least 1");
  require(shape.queries >= 1, "query", "must be at least 1");
  require(mc_samples >= 1, "mc_samples", "must be at least 1");
  require(lr_theta > 0.0, "lr_theta", "must be positive");
  require(lr_prior > 0.0, "lr_prior", "must be positive");
  require(step_epochs >= 1, "step_epochs", "must be at least 1");
  require(decay > 0.0 && decay <= 1.0, "decay", "must lie in (0, 1]");
  require(epoch_length >= 1, "epoch_length", "must be at least 1");
  require(clip_norm > 0.0, "clip_norm", "must be positive");
  require(workers >= 1, "workers", "must be at least 1");
}

std::uint64_t train_stream_seed(std::uint64_t run_seed) { return Rng::derive(run_seed, kTrainStream); }

std::uint64_t validation_stream_seed(std::uint64_t run_seed) {
  return Rng::derive(run_seed, kValStream);
}

std::string to_json_line(const LogRecord& record) {
  nlohmann::ordered_json j;
  if (const auto* e = std::get_if<EpisodeRecord>(&record)) {
    j["episode"] = e->episode;
    j["loss"] = e->loss;
    j["lr_theta"] = e->lr_theta;
    j["lr_prior"] = e->lr_prior;
    j["beta"] = e->beta;
    j["beta_b"] = e->beta_b;
  } else {
    const auto& v = std::get<ValidationRecord>(record);
    j["epoch"] = v.epoch;
    j["val_acc"] = v.val_acc;
    j["val_ci95"] = v.val_ci95;
  }
  return j.dump();
}

TrainResult train(const TrainConfig& config, const DatasetSplit& split, Model model,
                  const std::function<void(const LogRecord&)>& on_record) {
  config.validate();
  TrainResult result;
  auto emit = [&](LogRecord r) {
    if (on_record) on_record(r);
    result.log.push_back(std::move(r));
  };

  OptimizerState theta_state, prior_state;
  const std::uint64_t train_seed = train_stream_seed(config.seed);
  const std::uint64_t val_seed = validation_stream_seed(config.seed);
  const bool validating = config.val_episodes > 0;
  result.best_model = model;

  for (std::size_t t = 0; t < config.episodes; ++t) {
    const std::size_t epoch = t / config.epoch_length;
    const double lr_theta = lr_schedule(config.lr_theta, epoch, config.step_epochs, config.decay);
    const double lr_prior = lr_schedule(config.lr_prior, epoch, config.step_epochs, config.decay);

    const std::uint64_t seed = episode_seed(train_seed, t);
    Rng rng(seed);
    const Episode ep = sample_episode(split, SplitTag::train, config.shape, rng);
    const McNoise noise = model.head == HeadKind::gpldla
                              ? draw_mc_noise(rng, config.mc_samples, config.shape.ways,
                                              model.backbone.spec.feature_dim())
                              : McNoise{};

    const ModelLeaves leaves = ModelLeaves::from(model);
    const Var loss = episode_loss(model, leaves, ep, noise);
    if (!std::isfinite(loss.item())) {
      throw NumericalAbort("non-finite loss at episode " + std::to_string(t + 1) +
                           " (episode seed " + std::to_string(seed) + "); " +
                           parameter_summary(model));
    }
    backward(loss);

    std::vector<Tensor> grads;
    for (const auto& leaf : leaves.backbone) grads.push_back(leaf.grad());
    grads.push_back(leaves.prior.log_beta.grad());
    grads.push_back(leaves.prior.log_beta_b.grad());
    grads.push_back(leaves.log_noise.grad());
    for (const auto& g : grads) {
      if (!g.all_finite()) {
        throw NumericalAbort("non-finite gradient at episode " + std::to_string(t + 1) +
                             " (episode seed " + std::to_string(seed) + "); " +
                             parameter_summary(model));
      }
    }
    if (config.clip_gradients) clip_grad_norm(grads, config.clip_norm);

    const std::size_t n_theta = leaves.backbone.size();
    std::vector<Tensor*> theta;
    for (auto& nt : model.backbone.tensors) theta.push_back(&nt.value);
    if (!theta.empty()) {
      adam_step(theta, std::span<const Tensor>(grads).first(n_theta), theta_state, lr_theta);
    }
    Tensor log_beta = Tensor::scalar(model.prior.log_beta);
    Tensor log_beta_b = Tensor::scalar(model.prior.log_beta_b);
    Tensor log_noise = Tensor::scalar(model.log_noise);
    std::vector<Tensor*> prior{&log_beta, &log_beta_b, &log_noise};
    adam_step(prior, std::span<const Tensor>(grads).subspan(n_theta), prior_state, lr_prior);
    model.prior.log_beta = log_beta.item();
    model.prior.log_beta_b = log_beta_b.item();
    model.log_noise = log_noise.item();

    emit(EpisodeRecord{t + 1, loss.item(), lr_theta, lr_prior, model.prior.beta(),
                       model.prior.beta_b()});

    const bool epoch_done = (t + 1) % config.epoch_length == 0;
    if (validating && epoch_done) {
      const auto report = evaluate_accuracy(model, split, SplitTag::val, config.val_episodes,
                                            config.shape, config.mc_samples, val_seed,
                                            config.workers);
      const std::size_t completed = (t + 1) / config.epoch_length;
      emit(ValidationRecord{completed, report.mean, report.ci95});
      spdlog::info("[{}] epoch {} val acc {:.4f} +- {:.4f}", to_string(model.head), completed,
                   report.mean, report.ci95);
      if (!result.best_epoch || report.mean > result.best_val_acc) {
        result.best_epoch = completed;
        result.best_val_acc = report.mean;
        result.best_model = model;
      }
    }
  }
  result.final_model = model;
  if (!result.best_epoch) result.best_model = model;
  return result;
}

}  // namespace gpldla
