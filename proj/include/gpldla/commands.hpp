#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "gpldla/model.hpp"

namespace gpldla {

enum ExitCode : int {
  kExitOk = 0,
  kExitSelfcheckFailed = 1,
  kExitUsage = 2,
  kExitNumerical = 3,
};

// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<HeadKind> head;
};

struct RunConfig;

// Model every run starts from; a function of the config seed only.
Model initial_model(const RunConfig& config, HeadKind head);

int cmd_train(const std::string& config_path, const Overrides& overrides, std::ostream& out,
              std::ostream& err);
int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const Overrides& overrides, std::ostream& out, std::ostream& err);
int cmd_selfcheck(std::uint64_t seed, bool mutate, std::ostream& out);
int cmd_compare(const std::string& config_path, const Overrides& overrides, std::ostream& out,
                std::ostream& err);

}  // namespace gpldla
