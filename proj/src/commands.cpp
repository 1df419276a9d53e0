#include "gpldla/commands.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "gpldla/checkpoint.hpp"
#include "gpldla/errors.hpp"
#include "gpldla/evaluation.hpp"
#include "gpldla/run_config.hpp"
#include "gpldla/selfcheck.hpp"
#include "gpldla/trainer.hpp"
#include "json.hpp"

namespace gpldla {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

RunConfig resolve(const std::string& config_path, const Overrides& o) {
  RunConfig config = load_run_config(config_path);
  if (o.out_dir) config.out_dir = *o.out_dir;
  if (o.seed) {
    config.seed = *o.seed;
    config.train.seed = *o.seed;
  }
  if (o.workers) config.workers = *o.workers;
  if (o.head) config.head = *o.head;
  config.validate();
  return config;
}

DatasetSplit load_checked(const RunConfig& config) {
  DatasetSplit split = load_data(config.data);
  if (split.input_dim() != config.backbone.input_dim) {
    throw ValidationError(fmt::format("backbone.input_dim: {} does not match data width {}",
                                      config.backbone.input_dim, split.input_dim()));
  }
  return split;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
}

// Usage, config and data errors map to 2, numerical aborts to 3.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

struct TrainedRun {
  TrainResult result;
  std::string log;
};

TrainedRun train_head(const RunConfig& config, HeadKind head, const DatasetSplit& split) {
  Model model = initial_model(config, head);
  TrainConfig tc = config.train;
  tc.workers = config.resolved_workers();
  std::string log;
  auto result = train(tc, split, std::move(model),
                      [&](const LogRecord& r) { log += to_json_line(r) + "\n"; });
  return {std::move(result), std::move(log)};
}

struct Metrics {
  AccuracyReport accuracy;
  CalibrationReport calibration;
};

// Accuracy, temperature and ECE on three disjoint seed streams of the test split.
Metrics evaluate_model(const RunConfig& config, const Model& model, const DatasetSplit& split) {
  const auto& ev = config.eval;
  const auto shape = config.train.shape;
  const std::size_t workers = config.resolved_workers();
  Metrics m;
  m.accuracy = evaluate_accuracy(model, split, SplitTag::test, ev.episodes, shape, ev.mc_samples,
                                 Rng::derive(ev.seed, 1), workers);
  const auto calib = collect_scores(model, split, SplitTag::test, ev.calib_episodes, shape,
                                    ev.mc_samples, Rng::derive(ev.seed, 2), workers);
  const auto [cs, cl] = stack_scores(calib);
  const double temperature = fit_temperature(cs, cl);
  const auto held = collect_scores(model, split, SplitTag::test, ev.ece_episodes, shape,
                                   ev.mc_samples, Rng::derive(ev.seed, 3), workers);
  const auto [hs, hl] = stack_scores(held);
  m.calibration = calibration_report(hs, hl, temperature, ev.bins);
  return m;
}

std::string reliability_csv(const CalibrationReport& c) {
  std::string s = "bin,lower,upper,confidence,accuracy,count\n";
  const double width = 1.0 / static_cast<double>(c.bins.size());
  for (std::size_t i = 0; i < c.bins.size(); ++i) {
    const auto& b = c.bins[i];
    s += fmt::format("{},{},{},{},{},{}\n", i, width * i, width * (i + 1), b.confidence,
                     b.accuracy, b.count);
  }
  return s;
}

json metrics_json(const Metrics& m, std::size_t episodes) {
  json j;
  j["accuracy"] = m.accuracy.mean;
  j["ci95"] = m.accuracy.ci95;
  j["ece"] = m.calibration.ece;
  j["temperature"] = m.calibration.temperature;
  j["n_episodes"] = episodes;
  return j;
}

}  // namespace

Model initial_model(const RunConfig& config, HeadKind head) {
  Rng rng(Rng::derive(config.seed, 0x1417));
  return init_model(head, config.backbone, rng);
}

int cmd_train(const std::string& config_path, const Overrides& overrides, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = resolve(config_path, overrides);
    const DatasetSplit split = load_checked(config);
    const fs::path dir = config.out_dir;
    fs::create_directories(dir);
    write_text(dir / "config.toml", to_toml(config));
    auto run = train_head(config, config.head, split);
    write_text(dir / "train_log.jsonl", run.log);
    write_checkpoint(dir / "checkpoint.bin", model_tensors(run.result.best_model));
    write_checkpoint(dir / "checkpoint_final.bin", model_tensors(run.result.final_model));
    out << fmt::format("trained {} for {} episodes", to_string(config.head), config.train.episodes);
    if (run.result.best_epoch) {
      out << fmt::format("; best val acc {:.4f} at epoch {}", run.result.best_val_acc,
                         *run.result.best_epoch);
    }
    out << "\n" << parameter_summary(run.result.best_model) << "\n";
    return int{kExitOk};
  });
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const Overrides& overrides, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = resolve(config_path, overrides);
    const Model model =
        model_from_tensors(read_checkpoint(checkpoint_path), config.backbone, config.head);
    const DatasetSplit split = load_checked(config);
    const Metrics m = evaluate_model(config, model, split);
    const fs::path dir = config.out_dir;
    fs::create_directories(dir);
    json j = metrics_json(m, config.eval.episodes);
    j["head"] = to_string(config.head);
    j["config"] = to_toml(config);
    write_text(dir / "metrics.json", j.dump(2) + "\n");
    write_text(dir / "reliability.csv", reliability_csv(m.calibration));
    out << fmt::format("accuracy {:.4f} +- {:.4f}  ece {:.4f}  temperature {:.4f}\n",
                       m.accuracy.mean, m.accuracy.ci95, m.calibration.ece,
                       m.calibration.temperature);
    return int{kExitOk};
  });
}

int cmd_selfcheck(std::uint64_t seed, bool mutate, std::ostream& out) {
  SelfcheckOptions options;
  options.seed = seed;
  if (mutate) options.fault = PluginFault::inverted_beta_exponent;
  const auto results = run_selfcheck(options);
  print_selfcheck_table(out, results);
  for (const auto& r : results) {
    if (!r.passed) return kExitSelfcheckFailed;
  }
  return kExitOk;
}

int cmd_compare(const std::string& config_path, const Overrides& overrides, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = resolve(config_path, overrides);
    if (config.compare_heads.size() < 2) {
      throw ValidationError("heads: compare needs at least two heads");
    }
    const DatasetSplit split = load_checked(config);
    const fs::path dir = config.out_dir;
    fs::create_directories(dir);
    write_text(dir / "config.toml", to_toml(config));
    std::string csv = "head,accuracy,ci95,ece,temperature,n_episodes\n";
    json rows = json::array();
    for (HeadKind head : config.compare_heads) {
      auto run = train_head(config, head, split);
      const Metrics m = evaluate_model(config, run.result.best_model, split);
      csv += fmt::format("{},{},{},{},{},{}\n", to_string(head), m.accuracy.mean, m.accuracy.ci95,
                         m.calibration.ece, m.calibration.temperature, config.eval.episodes);
      json row;
      row["head"] = to_string(head);
      row.update(metrics_json(m, config.eval.episodes));
      rows.push_back(row);
      out << fmt::format("{:<9} acc {:.4f} +- {:.4f}  ece {:.4f}\n", to_string(head),
                         m.accuracy.mean, m.accuracy.ci95, m.calibration.ece);
    }
    json j;
    j["eval_seed"] = config.eval.seed;
    j["rows"] = rows;
    write_text(dir / "compare.csv", csv);
    write_text(dir / "compare.json", j.dump(2) + "\n");
    return int{kExitOk};
  });
}

}  // namespace gpldla
