#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "rtrrl/actor_critic.hpp"
#include "rtrrl/envs.hpp"
#include "rtrrl/optimizer.hpp"
#include "rtrrl/recurrent_core.hpp"
#include "rtrrl/tensor.hpp"

namespace rtrrl {

class MetricSink;

struct TrainConfig {
  std::string env = "memory_chain";
  EnvParams env_params;
  std::uint64_t seed = 0;
  std::string run_id;  // derived from env, mode and seed when empty

  CoreOptions core;
  FeedbackMode feedback = FeedbackMode::fa;

  double gamma = 0.99;
  LearningRates lrs;
  double eta_actor = 1.0;  // scale of the actor error in the recurrent trace
  double lambda_actor = 0.9;
  double lambda_critic = 0.9;
  double lambda_rnn = 0.9;
  OptimizerConfig optimizer;
  double clip = 1.0;
  bool normalize_obs = false;
  double action_epsilon = 0.0;
  int update_period = 1;
  double lr_decay = 0.0;  // per-step factor (1 - lr_decay) on the recurrent rate
  double init_log_std = 0.0;
  bool reset_on_episode = true;

  std::int64_t max_steps = 50'000'000;
  int patience = 20;
  std::int64_t epoch_steps = 100'000;
  std::int64_t eval_steps = 10'000;
  std::int64_t log_interval = 10'000;
  bool log_wall_time = false;

  /// Throws ConfigError on inconsistent or out-of-range settings.
  void validate() const;
  std::string resolved_run_id() const;
  TraceDecay decay() const { return {gamma, lambda_actor, lambda_critic, lambda_rnn}; }
};

/// Running mean / variance standardization (Welford).
class ObsNormalizer {
 public:
  ObsNormalizer() = default;
  explicit ObsNormalizer(Index dim);

  void update(const Vector& x);
  Vector apply(const Vector& x) const;

  double count() const { return count_; }
  const Vector& mean() const { return mean_; }
  Vector variance() const;
  void restore(double count, const Vector& mean, const Vector& m2);
  const Vector& m2() const { return m2_; }

 private:
  double count_ = 0.0;
  Vector mean_;
  Vector m2_;
};

struct StepInfo {
  Action action;
  double reward = 0.0;
  bool terminal = false;
  double delta = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  bool updated = false;
  GradNorms norms;
};

// The learning agent: recurrent core, linear heads, eligibility traces and
// optimizers, driven one environment transition at a time.
class Agent {
 public:
  Agent(const TrainConfig& cfg, const EnvSpec& spec);
  Agent(const Agent& other);
  Agent& operator=(const Agent&) = delete;

  const TrainConfig& config() const { return cfg_; }
  const EnvSpec& env_spec() const { return spec_; }

  /// [obs, one-hot or raw previous action, previous reward]; a null action
  /// leaves the action slot at zero.
  Vector meta_input(const Vector& obs, const Action* prev_action, double prev_reward) const;

  /// Zero the hidden state, trace and eligibility traces, then take the
  /// first recurrent step on [obs, 0, 0] and recompute v.
  void episode_boundary(const Vector& obs);

  /// One iteration of the online loop against an auto-resetting environment.
  StepInfo step(Environment& env, Rng& policy_rng);

  RecurrentCore& core() { return *core_; }
  const RecurrentCore& core() const { return *core_; }
  HeadParams& heads() { return heads_; }
  const HeadParams& heads() const { return heads_; }
  const EligibilityTraces& traces() const { return traces_; }
  HeadOptimizers& optimizers() { return opt_; }
  double value() const { return v_; }
  const LearningRates& learning_rates() const { return lrs_; }
  ObsNormalizer& normalizer() { return norm_; }
  const ObsNormalizer& normalizer() const { return norm_; }
  std::int64_t step_count() const { return steps_; }

  std::vector<Tensor> export_tensors() const;
  void import_tensors(const TensorMap& tensors);

 private:
  Vector observe(const Vector& obs, bool learn);

  TrainConfig cfg_;
  EnvSpec spec_;
  std::unique_ptr<RecurrentCore> core_;
  HeadParams heads_;
  EligibilityTraces traces_;
  UpdateDirections pending_;
  HeadOptimizers opt_;
  LearningRates lrs_;
  ObsNormalizer norm_;
  double v_ = 0.0;
  std::int64_t steps_ = 0;
  bool started_ = false;
};

struct EvalResult {
  double mean_return = 0.0;
  std::int64_t episodes = 0;
};

/// Frozen-parameter rollout with mode actions; the hidden state is carried
/// within episodes and reset at boundaries. When no episode completes, the
/// return of the partial episode is reported.
EvalResult evaluate(const Agent& agent, Environment& env, std::int64_t steps);

struct TrainResult {
  std::string run_id;
  double best_eval = 0.0;
  std::int64_t best_step = 0;
  std::int64_t steps = 0;
  std::int64_t episodes = 0;
  int epochs = 0;
  bool early_stopped = false;
  std::unique_ptr<Agent> final_agent;
  std::unique_ptr<Agent> best_agent;
};

/// Runs the online loop until max_steps or until `patience` consecutive
/// epochs (epoch_steps transitions + one evaluation) bring no improvement.
/// sink may be null.
TrainResult train(const TrainConfig& cfg, MetricSink* sink);

}  // namespace rtrrl
