#pragma once

#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtrrl/agent.hpp"

namespace rtrrl {

nlohmann::json config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);

/// First line of every metric log: resolved config plus environment shape.
nlohmann::json run_header(const TrainConfig& cfg, const EnvSpec& spec);

/// Prefix of the environment variables that fill options left unset by the
/// command line and the config file, e.g. RTRRL_ALG_HIDDEN=64 for --alg.hidden.
inline constexpr const char* kEnvVarPrefix = "RTRRL_";

// Binds every TrainConfig field to a dotted flag (--alg.hidden, --train.patience,
// ...) plus --config FILE. Precedence: flag > config file > environment
// variable > built-in default (CLI11's own order). Environment parameters are free-form --env.KEY
// VALUE pairs (or an [env] section of the config file) collected by
// finish_train_options().
struct TrainOptionBinding {
  std::string cell = "ctrnn";
  std::string grad_mode = "rflo";
  std::string feedback = "fa";
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
};

void add_train_options(CLI::App& app, TrainConfig& cfg, TrainOptionBinding& bind);
// CLI11 reads only the top-level app's config file. Call after a first
// parse with the selected subcommand: if it was given --config, the command
// line is parsed again with that file attached to `root` and routed into `sub`.
void reparse_with_subcommand_config(CLI::App& root, CLI::App& sub, int argc, const char* const* argv);

/// Resolves enum strings and env parameters after app.parse(); throws ConfigError.
void finish_train_options(CLI::App& app, TrainConfig& cfg, const TrainOptionBinding& bind);

}  // namespace rtrrl
