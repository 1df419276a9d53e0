#include <cstdlib>
#include <iostream>
#include <string>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "gpldla/commands.hpp"

namespace {

void configure_logging() {
  const char* level = std::getenv("GPLDLA_LOG");
  const std::string name = level ? level : "error";
  if (name == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else if (name == "info") {
    spdlog::set_level(spdlog::level::info);
  } else {
    spdlog::set_level(spdlog::level::err);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Few-shot classification with a Laplace GP head"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string head;
  bool mutate = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_option("--seed", seed, "Run seed");
    cmd->add_option("--workers", workers, "Evaluation workers (0: all cores)");
    cmd->add_option("--head", head, "gpldla, protonet or gpdkt");
  };

  auto* train = app.add_subcommand("train", "Meta-train a model");
  add_common(train);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  auto* selfcheck = app.add_subcommand("selfcheck", "Run the randomized invariant suites");
  selfcheck->add_option("--seed", seed, "Suite seed");
  selfcheck->add_flag("--mutate", mutate, "Inject a plugin fault; checks are expected to fail");
  auto* compare = app.add_subcommand("compare", "Train and evaluate several heads");
  add_common(compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gpldla::kExitUsage;
  }

  gpldla::Overrides overrides;
  auto* active = app.get_subcommands().front();
  const bool runs = active != selfcheck;
  if (runs && active->count("--out")) overrides.out_dir = out_dir;
  if (runs && active->count("--seed")) overrides.seed = seed;
  if (runs && active->count("--workers")) overrides.workers = workers;
  if (runs && active->count("--head")) {
    try {
      overrides.head = gpldla::parse_head(head);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return gpldla::kExitUsage;
    }
  }

  if (*train) return gpldla::cmd_train(config_path, overrides, std::cout, std::cerr);
  if (*eval) return gpldla::cmd_eval(config_path, checkpoint_path, overrides, std::cout, std::cerr);
  if (*selfcheck) return gpldla::cmd_selfcheck(seed, mutate, std::cout);
  return gpldla::cmd_compare(config_path, overrides, std::cout, std::cerr);
}
