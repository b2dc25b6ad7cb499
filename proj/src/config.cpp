#include "rtrrl/config.hpp"

#include <algorithm>
#include <cctype>
#include <memory>
#include <set>

#include "rtrrl/metrics.hpp"

namespace rtrrl {

namespace {

using nlohmann::json;

std::string env_var_name(const std::string& dotted) {
  std::string s = kEnvVarPrefix;
  for (char c : dotted) s += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it != j.end()) out = it->get<T>();
}

// CLI11 maps [section] headers to subcommands; flatten them so that
// "[alg] hidden = 16" reaches the --alg.hidden option. A non-empty route
// sends every item to that subcommand instead of the app owning the file.
class DottedConfig : public CLI::ConfigTOML {
 public:
  explicit DottedConfig(std::string route = "") : route_(std::move(route)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> out;
    for (CLI::ConfigItem& item : CLI::ConfigTOML::from_config(input)) {
      if (item.name == "++" || item.name == "--") continue;  // section open / close markers
      std::string full;
      for (const auto& p : item.parents) full += p + ".";
      item.name = full + item.name;
      item.parents.clear();
      if (!route_.empty()) item.parents.push_back(route_);
      out.push_back(std::move(item));
    }
    return out;
  }

 private:
  std::string route_;
};

}  // namespace

json config_to_json(const TrainConfig& cfg) {
  json env = {{"name", cfg.env}, {"params", cfg.env_params}};
  json alg = {
      {"cell", to_string(cfg.core.cell)},
      {"mode", to_string(cfg.core.grad_mode)},
      {"feedback", to_string(cfg.feedback)},
      {"hidden", cfg.core.hidden},
      {"dt", cfg.core.dt},
      {"tau_min", cfg.core.tau_min},
      {"tau_max", cfg.core.tau_max},
      {"train_tau", cfg.core.train_tau},
      {"lru_r_min", cfg.core.lru_r_min},
      {"lru_r_max", cfg.core.lru_r_max},
      {"lru_max_phase", cfg.core.lru_max_phase},
      {"lru_max_modulus", cfg.core.lru_max_modulus},
      {"gamma", cfg.gamma},
      {"lr_actor", cfg.lrs.actor},
      {"lr_critic", cfg.lrs.critic},
      {"lr_rnn", cfg.lrs.recurrent},
      {"eta_actor", cfg.eta_actor},
      {"eta_entropy", cfg.lrs.entropy},
      {"lambda_actor", cfg.lambda_actor},
      {"lambda_critic", cfg.lambda_critic},
      {"lambda_rnn", cfg.lambda_rnn},
      {"optimizer", to_string(cfg.optimizer.kind)},
      {"adam_beta1", cfg.optimizer.beta1},
      {"adam_beta2", cfg.optimizer.beta2},
      {"adam_eps", cfg.optimizer.eps},
      {"clip", cfg.clip},
      {"normalize_obs", cfg.normalize_obs},
      {"action_epsilon", cfg.action_epsilon},
      {"update_period", cfg.update_period},
      {"lr_decay", cfg.lr_decay},
      {"init_log_std", cfg.init_log_std},
      {"reset_on_episode", cfg.reset_on_episode},
  };
  json train = {
      {"max_steps", cfg.max_steps},     {"patience", cfg.patience},
      {"epoch_steps", cfg.epoch_steps}, {"eval_steps", cfg.eval_steps},
      {"log_interval", cfg.log_interval}, {"log_wall_time", cfg.log_wall_time},
  };
  return {{"run_id", cfg.resolved_run_id()}, {"seed", cfg.seed}, {"env", env}, {"alg", alg},
          {"train", train}};
}

TrainConfig config_from_json(const json& j) {
  static const std::vector<std::string> top = {"run_id", "seed", "env", "alg", "train"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(top.begin(), top.end(), k) == top.end()) throw ConfigError("unknown config key '" + k + "'");
  }
  TrainConfig cfg;
  try {
    read(j, "run_id", cfg.run_id);
    read(j, "seed", cfg.seed);
    if (auto it = j.find("env"); it != j.end()) {
      read(*it, "name", cfg.env);
      read(*it, "params", cfg.env_params);
    }
    if (auto it = j.find("alg"); it != j.end()) {
      const json& a = *it;
      if (a.contains("cell")) cfg.core.cell = parse_cell_type(a["cell"].get<std::string>());
      if (a.contains("mode")) cfg.core.grad_mode = parse_grad_mode(a["mode"].get<std::string>());
      if (a.contains("feedback")) cfg.feedback = parse_feedback_mode(a["feedback"].get<std::string>());
      if (a.contains("optimizer")) cfg.optimizer.kind = parse_optimizer(a["optimizer"].get<std::string>());
      read(a, "hidden", cfg.core.hidden);
      read(a, "dt", cfg.core.dt);
      read(a, "tau_min", cfg.core.tau_min);
      read(a, "tau_max", cfg.core.tau_max);
      read(a, "train_tau", cfg.core.train_tau);
      read(a, "lru_r_min", cfg.core.lru_r_min);
      read(a, "lru_r_max", cfg.core.lru_r_max);
      read(a, "lru_max_phase", cfg.core.lru_max_phase);
      read(a, "lru_max_modulus", cfg.core.lru_max_modulus);
      read(a, "gamma", cfg.gamma);
      read(a, "lr_actor", cfg.lrs.actor);
      read(a, "lr_critic", cfg.lrs.critic);
      read(a, "lr_rnn", cfg.lrs.recurrent);
      read(a, "eta_actor", cfg.eta_actor);
      read(a, "eta_entropy", cfg.lrs.entropy);
      read(a, "lambda_actor", cfg.lambda_actor);
      read(a, "lambda_critic", cfg.lambda_critic);
      read(a, "lambda_rnn", cfg.lambda_rnn);
      read(a, "adam_beta1", cfg.optimizer.beta1);
      read(a, "adam_beta2", cfg.optimizer.beta2);
      read(a, "adam_eps", cfg.optimizer.eps);
      read(a, "clip", cfg.clip);
      read(a, "normalize_obs", cfg.normalize_obs);
      read(a, "action_epsilon", cfg.action_epsilon);
      read(a, "update_period", cfg.update_period);
      read(a, "lr_decay", cfg.lr_decay);
      read(a, "init_log_std", cfg.init_log_std);
      read(a, "reset_on_episode", cfg.reset_on_episode);
    }
    if (auto it = j.find("train"); it != j.end()) {
      read(*it, "max_steps", cfg.max_steps);
      read(*it, "patience", cfg.patience);
      read(*it, "epoch_steps", cfg.epoch_steps);
      read(*it, "eval_steps", cfg.eval_steps);
      read(*it, "log_interval", cfg.log_interval);
      read(*it, "log_wall_time", cfg.log_wall_time);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return cfg;
}

json run_header(const TrainConfig& cfg, const EnvSpec& spec) {
  return {{"config", config_to_json(cfg)},
          {"env_spec",
           {{"name", spec.name},
            {"obs_dim", spec.obs_dim},
            {"action_kind", spec.action_kind == ActionKind::categorical ? "categorical" : "gaussian"},
            {"num_actions", spec.num_actions},
            {"action_dim", spec.action_dim},
            {"max_episode_steps", spec.max_episode_steps}}},
          {"csv_columns", csv_columns()}};
}

void add_train_options(CLI::App& app, TrainConfig& cfg, TrainOptionBinding& bind) {
  app.set_config("--config", "", "Config file (TOML-style key = value, [section] headers)");
  app.config_formatter(std::make_shared<DottedConfig>());
  app.allow_extras();
  app.allow_config_extras(CLI::config_extras_mode::capture);

  bind.cell = to_string(cfg.core.cell);
  bind.grad_mode = to_string(cfg.core.grad_mode);
  bind.feedback = to_string(cfg.feedback);
  bind.optimizer = to_string(cfg.optimizer.kind);
  bind.seed = cfg.seed;

  auto opt = [&](const std::string& name, auto& var, const std::string& desc) {
    return app.add_option("--" + name, var, desc)->envname(env_var_name(name))->capture_default_str();
  };

  opt("env", cfg.env, "Environment name, optionally with {key=value,...} parameters");
  opt("seed", bind.seed, "Run seed");
  opt("run_id", cfg.run_id, "Run identifier (derived when empty)");

  opt("alg.cell", bind.cell, "Recurrent cell: ctrnn | lru");
  opt("alg.mode", bind.grad_mode, "Gradient mode: rtrl | rflo | diag_rtrl");
  opt("alg.feedback", bind.feedback, "Error routing: fa | exact");
  opt("alg.hidden", cfg.core.hidden, "Number of recurrent units");
  opt("alg.dt", cfg.core.dt, "Euler step (1/dt substeps per environment step)");
  opt("alg.tau_min", cfg.core.tau_min, "Lower end of the time-constant init range");
  opt("alg.tau_max", cfg.core.tau_max, "Upper end of the time-constant init range");
  opt("alg.train_tau", cfg.core.train_tau, "Learn the time constants");
  opt("alg.lru_r_min", cfg.core.lru_r_min, "LRU eigenvalue modulus init, lower");
  opt("alg.lru_r_max", cfg.core.lru_r_max, "LRU eigenvalue modulus init, upper");
  opt("alg.lru_max_phase", cfg.core.lru_max_phase, "LRU eigenvalue phase init range");
  opt("alg.lru_max_modulus", cfg.core.lru_max_modulus, "LRU eigenvalue modulus bound");
  opt("alg.gamma", cfg.gamma, "Discount");
  opt("alg.lr_actor", cfg.lrs.actor, "Actor learning rate");
  opt("alg.lr_critic", cfg.lrs.critic, "Critic learning rate");
  opt("alg.lr_rnn", cfg.lrs.recurrent, "Recurrent learning rate");
  opt("alg.eta_actor", cfg.eta_actor, "Scale of the actor error in the recurrent trace");
  opt("alg.eta_entropy", cfg.lrs.entropy, "Entropy regularization");
  opt("alg.lambda_actor", cfg.lambda_actor, "Actor trace decay");
  opt("alg.lambda_critic", cfg.lambda_critic, "Critic trace decay");
  opt("alg.lambda_rnn", cfg.lambda_rnn, "Recurrent trace decay");
  opt("alg.optimizer", bind.optimizer, "sgd | adam");
  opt("alg.adam_beta1", cfg.optimizer.beta1, "Adam beta1");
  opt("alg.adam_beta2", cfg.optimizer.beta2, "Adam beta2");
  opt("alg.adam_eps", cfg.optimizer.eps, "Adam epsilon");
  opt("alg.clip", cfg.clip, "Per-block gradient norm clip (<= 0 disables)");
  opt("alg.normalize_obs", cfg.normalize_obs, "Standardize observations with running statistics");
  opt("alg.action_epsilon", cfg.action_epsilon, "Probability of a uniformly random action");
  opt("alg.update_period", cfg.update_period, "Steps between parameter updates");
  opt("alg.lr_decay", cfg.lr_decay, "Per-step decay of the recurrent learning rate");
  opt("alg.init_log_std", cfg.init_log_std, "Initial log standard deviation (continuous actions)");
  opt("alg.reset_on_episode", cfg.reset_on_episode, "Zero the hidden state at episode boundaries");

  opt("train.max_steps", cfg.max_steps, "Environment step budget");
  opt("train.patience", cfg.patience, "Epochs without improvement before stopping");
  opt("train.epoch_steps", cfg.epoch_steps, "Steps per epoch (one evaluation each)");
  opt("train.eval_steps", cfg.eval_steps, "Steps per evaluation");
  opt("train.log_interval", cfg.log_interval, "Steps between metric records");
  opt("train.log_wall_time", cfg.log_wall_time, "Record wall-clock time (breaks byte-identical logs)");
}

void reparse_with_subcommand_config(CLI::App& root, CLI::App& sub, int argc, const char* const* argv) {
  CLI::Option* file = sub.get_config_ptr();
  if (file == nullptr || file->count() == 0) return;
  // bound variables keep the first parse's values, so only file keys change anything
  root.set_config("--rtrrl-routed-config", file->as<std::string>(), "", true)->group("");
  root.config_formatter(std::make_shared<DottedConfig>(sub.get_name()));
  root.clear();
  root.parse(argc, argv);
}

void finish_train_options(CLI::App& app, TrainConfig& cfg, const TrainOptionBinding& bind) {
  cfg.core.cell = parse_cell_type(bind.cell);
  cfg.core.grad_mode = parse_grad_mode(bind.grad_mode);
  cfg.feedback = parse_feedback_mode(bind.feedback);
  cfg.optimizer.kind = parse_optimizer(bind.optimizer);
  cfg.seed = bind.seed;

  auto [name, params] = parse_env_string(cfg.env);
  cfg.env = name;
  for (const auto& [k, v] : params) cfg.env_params[k] = v;

  // leftovers: --env.KEY VALUE or --env.KEY=VALUE, from the command line or the config file
  // command-line leftovers precede config-file ones, so the first occurrence wins
  const std::vector<std::string> rest = app.remaining();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    std::string tok = rest[i];
    // config-file extras arrive without the leading dashes, possibly routed via the subcommand
    if (const std::string routed = app.get_name() + "."; !app.get_name().empty() && tok.rfind(routed, 0) == 0) {
      tok = tok.substr(routed.size());
    }
    if (tok.rfind("--env.", 0) == 0) {
      tok = tok.substr(6);
    } else if (tok.rfind("env.", 0) == 0) {
      tok = tok.substr(4);
    } else {
      throw ConfigError("unknown option '" + tok + "'");
    }
    std::string value;
    if (auto eq = tok.find('='); eq != std::string::npos) {
      value = tok.substr(eq + 1);
      tok = tok.substr(0, eq);
    } else {
      if (i + 1 >= rest.size()) throw ConfigError("option '--env." + tok + "' needs a value");
      value = rest[++i];
    }
    if (tok.empty()) throw ConfigError("empty environment parameter name");
    if (seen.insert(tok).second) cfg.env_params[tok] = value;
  }
  cfg.validate();
  // surfaces unknown environment names and parameters before any work starts
  make_env(cfg.env, cfg.env_params, 0);
}

}  // namespace rtrrl
