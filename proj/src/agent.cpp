#include "rtrrl/agent.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "rtrrl/config.hpp"
#include "rtrrl/metrics.hpp"

namespace rtrrl {

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  check_compatible(core.cell, core.grad_mode);
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (core.hidden < 1) throw ConfigError("alg.hidden must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("alg.gamma must lie in [0, 1)");
  if (!in_unit(lambda_actor) || !in_unit(lambda_critic) || !in_unit(lambda_rnn)) {
    throw ConfigError("trace decays must lie in [0, 1]");
  }
  if (lrs.actor < 0 || lrs.critic < 0 || lrs.recurrent < 0 || lrs.entropy < 0 || eta_actor < 0) {
    throw ConfigError("learning rates and scales must be non-negative");
  }
  if (!in_unit(action_epsilon)) throw ConfigError("alg.action_epsilon must lie in [0, 1]");
  if (update_period < 1) throw ConfigError("alg.update_period must be >= 1");
  if (!(lr_decay >= 0.0 && lr_decay < 1.0)) throw ConfigError("alg.lr_decay must lie in [0, 1)");
  if (!(core.dt > 0.0 && core.dt <= 1.0)) throw ConfigError("alg.dt must lie in (0, 1]");
  const double k = 1.0 / core.dt;
  if (std::abs(k - std::round(k)) > 1e-9) throw ConfigError("1 / alg.dt must be an integer");
  if (core.cell == CellType::ctrnn && (!(core.tau_min > 1.0) || core.tau_max < core.tau_min)) {
    throw ConfigError("tau init range must satisfy 1 < tau_min <= tau_max");
  }
  if (max_steps < 1 || epoch_steps < 1 || eval_steps < 1 || log_interval < 1) {
    throw ConfigError("step counts must be positive");
  }
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
}

std::string TrainConfig::resolved_run_id() const {
  if (!run_id.empty()) return run_id;
  return env + "-" + to_string(core.cell) + "-" + to_string(core.grad_mode) + "-" +
         to_string(feedback) + "-s" + std::to_string(seed);
}

// -------------------------------------------------------------- normalizer

ObsNormalizer::ObsNormalizer(Index dim) : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

void ObsNormalizer::update(const Vector& x) {
  count_ += 1.0;
  const Vector d = x - mean_;
  mean_ += d / count_;
  m2_ += d.cwiseProduct(x - mean_);
}

Vector ObsNormalizer::variance() const {
  if (count_ < 2.0) return Vector::Ones(mean_.size());
  return m2_ / count_;
}

Vector ObsNormalizer::apply(const Vector& x) const {
  return (x - mean_).cwiseQuotient((variance().array() + 1e-8).sqrt().matrix());
}

void ObsNormalizer::restore(double count, const Vector& mean, const Vector& m2) {
  count_ = count;
  mean_ = mean;
  m2_ = m2;
}

// ------------------------------------------------------------------- agent

Agent::Agent(const TrainConfig& cfg, const EnvSpec& spec) : cfg_(cfg), spec_(spec), lrs_(cfg.lrs) {
  cfg_.validate();
  Rng init = make_rng(cfg.seed, "init");
  Rng feedback = make_rng(cfg.seed, "feedback");
  const Index inputs = spec.obs_dim + spec.action_slot() + 1;
  core_ = make_core(cfg.core, inputs, init);
  heads_ = init_heads(spec.action_kind, core_->feature_size(), spec.action_slot(), feedback,
                      cfg.init_log_std);
  traces_ = EligibilityTraces::zeros(heads_, core_->param_count());
  pending_ = UpdateDirections::zeros(heads_, core_->param_count());
  opt_ = make_optimizers(cfg.optimizer, heads_, core_->param_count());
  norm_ = ObsNormalizer(spec.obs_dim);
}

Agent::Agent(const Agent& other)
    : cfg_(other.cfg_),
      spec_(other.spec_),
      core_(other.core_->clone()),
      heads_(other.heads_),
      traces_(other.traces_),
      pending_(other.pending_),
      opt_(other.opt_),
      lrs_(other.lrs_),
      norm_(other.norm_),
      v_(other.v_),
      steps_(other.steps_),
      started_(other.started_) {}

Vector Agent::meta_input(const Vector& obs, const Action* prev_action, double prev_reward) const {
  const Index n_obs = spec_.obs_dim;
  const Index slot = spec_.action_slot();
  if (obs.size() != n_obs) throw ConfigError("observation has the wrong dimension");
  Vector x = Vector::Zero(n_obs + slot + 1);
  x.head(n_obs) = obs;
  if (prev_action != nullptr) {
    if (spec_.action_kind == ActionKind::categorical) {
      x(n_obs + prev_action->index) = 1.0;
    } else {
      x.segment(n_obs, slot) = prev_action->value;
    }
  }
  x(n_obs + slot) = prev_reward;
  return x;
}

Vector Agent::observe(const Vector& obs, bool learn) {
  if (!cfg_.normalize_obs) return obs;
  if (learn) norm_.update(obs);
  return norm_.apply(obs);
}

void Agent::episode_boundary(const Vector& obs) {
  core_->reset_state();
  traces_.set_zero();
  core_->forward(meta_input(observe(obs, true), nullptr, 0.0));
  core_->commit();
  v_ = value_forward(heads_.theta_C, core_->features());
  started_ = true;
}

StepInfo Agent::step(Environment& env, Rng& policy_rng) {
  if (!started_) throw ProtocolError("Agent::step() before episode_boundary()");
  StepInfo info;
  try {
    const Vector h = core_->features();
    const ActionDistribution dist = policy_forward(heads_, h);
    Action a = sample_action(dist, policy_rng);
    if (cfg_.action_epsilon > 0.0 && spec_.action_kind == ActionKind::categorical &&
        std::uniform_real_distribution<double>(0.0, 1.0)(policy_rng) < cfg_.action_epsilon) {
      a.index = std::uniform_int_distribution<int>(0, static_cast<int>(spec_.num_actions) - 1)(policy_rng);
    }

    const EnvStep s = env.step(a);
    core_->forward(meta_input(observe(s.obs, true), &a, s.reward));

    // instantaneous gradients at the state that produced the action
    const DistGrad lg = log_prob_grad(dist, a);
    InstantGrads g;
    g.critic = h;
    g.actor = lg.d_out * h.transpose();
    g.log_std = lg.d_log_std;
    const HiddenFeedback fb = route_feedback(cfg_.feedback, heads_, lg.d_out);
    g.recurrent = Vector::Zero(core_->param_count());
    core_->feedback(fb.g_C + cfg_.eta_actor * fb.g_A, g.recurrent);
    accumulate_traces(traces_, g, cfg_.decay());

    const EntropyResult ent = entropy_and_grad(dist);
    EntropyGrads eg;
    const bool use_entropy = lrs_.entropy > 0.0;
    if (use_entropy) {
      eg.actor = ent.grad.d_out * h.transpose();
      eg.log_std = ent.grad.d_log_std;
      eg.recurrent = Vector::Zero(core_->param_count());
      core_->feedback(route_actor_feedback(cfg_.feedback, heads_, ent.grad.d_out), eg.recurrent);
    }

    const double v_next = value_forward(heads_.theta_C, core_->next_features());
    const double delta = td_error(s.reward, cfg_.gamma, v_, v_next, s.terminal);

    info.action = a;
    info.reward = s.reward;
    info.terminal = s.terminal;
    info.delta = delta;
    info.value = v_;
    info.entropy = ent.value;

    add_directions(pending_, traces_, delta, use_entropy ? &eg : nullptr, lrs_.entropy);
    ++steps_;
    if (steps_ % cfg_.update_period == 0) {
      info.norms = apply_directions(heads_, core_->params(), pending_, lrs_, cfg_.clip, opt_);
      core_->params_changed();
      pending_.set_zero();
      info.updated = true;
    }
    if (cfg_.lr_decay > 0.0) lrs_.recurrent *= 1.0 - cfg_.lr_decay;

    if (s.terminal && cfg_.reset_on_episode) {
      episode_boundary(s.obs);
    } else {
      core_->commit();
      v_ = v_next;
      if (s.terminal) {
        traces_.set_zero();
        v_ = value_forward(heads_.theta_C, core_->features());
      }
    }
    if (!std::isfinite(v_)) throw NumericFault("non-finite value estimate");
  } catch (const NumericFault& e) {
    if (e.step() >= 0) throw;
    throw NumericFault(e.what(), steps_);
  }
  return info;
}

std::vector<Tensor> Agent::export_tensors() const {
  std::vector<Tensor> t = core_->export_tensors();
  t.push_back(to_tensor("head.theta_A", heads_.theta_A));
  t.push_back(to_tensor("head.theta_C", heads_.theta_C));
  t.push_back(to_tensor("head.B_A", heads_.B_A));
  t.push_back(to_tensor("head.B_C", heads_.B_C));
  if (heads_.log_std.size() > 0) t.push_back(to_tensor("head.log_std", heads_.log_std));
  if (cfg_.normalize_obs) {
    t.push_back(scalar_tensor("obs.count", norm_.count()));
    t.push_back(to_tensor("obs.mean", norm_.mean()));
    t.push_back(to_tensor("obs.m2", norm_.m2()));
  }
  return t;
}

void Agent::import_tensors(const TensorMap& tensors) {
  core_->import_tensors(tensors);
  const Index a = heads_.theta_A.rows();
  const Index n = heads_.theta_A.cols();
  heads_.theta_A = matrix_from(require(tensors, "head.theta_A"), a, n);
  heads_.theta_C = vector_from(require(tensors, "head.theta_C"), n);
  heads_.B_A = matrix_from(require(tensors, "head.B_A"), n, a);
  heads_.B_C = vector_from(require(tensors, "head.B_C"), n);
  if (heads_.log_std.size() > 0) heads_.log_std = vector_from(require(tensors, "head.log_std"), a);
  if (cfg_.normalize_obs) {
    const Index d = spec_.obs_dim;
    norm_.restore(scalar_from(require(tensors, "obs.count")),
                  vector_from(require(tensors, "obs.mean"), d), vector_from(require(tensors, "obs.m2"), d));
  }
  started_ = false;
}

// -------------------------------------------------------------- evaluation

EvalResult evaluate(const Agent& agent, Environment& env, std::int64_t steps) {
  auto core = agent.core().clone();
  core->set_tracking(false);
  const HeadParams& heads = agent.heads();
  const bool norm = agent.config().normalize_obs;
  auto input = [&](const Vector& obs, const Action* a, double r) {
    return agent.meta_input(norm ? agent.normalizer().apply(obs) : obs, a, r);
  };

  EvalResult res;
  double total = 0.0;
  double current = 0.0;
  core->reset_state();
  core->forward(input(env.reset(), nullptr, 0.0));
  core->commit();
  for (std::int64_t t = 0; t < steps; ++t) {
    const Action a = mode_action(policy_forward(heads, core->features()));
    const EnvStep s = env.step(a);
    current += s.reward;
    if (s.terminal) {
      total += current;
      current = 0.0;
      ++res.episodes;
      core->reset_state();
      core->forward(input(env.reset(), nullptr, 0.0));
    } else {
      core->forward(input(s.obs, &a, s.reward));
    }
    core->commit();
  }
  res.mean_return = res.episodes > 0 ? total / static_cast<double>(res.episodes) : current;
  return res;
}

// ---------------------------------------------------------------- training

namespace {

struct Window {
  double reward_sum = 0.0;
  std::int64_t episodes = 0;
  double abs_delta = 0.0;
  double entropy = 0.0;
  std::int64_t steps = 0;
  std::optional<GradNorms> norms;

  void reset() { *this = Window{}; }
};

// A saturated softmax leaves probabilities, entropy gradients and decaying
// traces in the subnormal range, where x86 arithmetic is ~100x slower.
// Flush them to zero for the duration of a run (MXCSR is per thread).
class FlushSubnormals {
 public:
#if defined(__SSE2__)
  FlushSubnormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }  // FTZ | DAZ
  ~FlushSubnormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

}  // namespace

TrainResult train(const TrainConfig& cfg, MetricSink* sink) {
  cfg.validate();
  const FlushSubnormals ftz;
  const auto started = std::chrono::steady_clock::now();
  AutoReset env(make_env(cfg.env, cfg.env_params, substream_seed(cfg.seed, "env")));
  auto eval_env = make_env(cfg.env, cfg.env_params, substream_seed(cfg.seed, "eval_env"));
  auto agent = std::make_unique<Agent>(cfg, env.spec());
  Rng policy = make_rng(cfg.seed, "policy");

  TrainResult result;
  result.run_id = cfg.resolved_run_id();
  result.best_eval = -std::numeric_limits<double>::infinity();
  if (sink != nullptr) sink->header(run_header(cfg, env.spec()));

  agent->episode_boundary(env.reset());
  Window window;
  double episode_return = 0.0;
  int since_best = 0;

  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    const StepInfo info = agent->step(env, policy);
    episode_return += info.reward;
    window.abs_delta += std::abs(info.delta);
    window.entropy += info.entropy;
    ++window.steps;
    if (info.updated) window.norms = info.norms;
    if (info.terminal) {
      ++result.episodes;
      window.reward_sum += episode_return;
      ++window.episodes;
      episode_return = 0.0;
    }
    result.steps = step;

    // a run shorter than one epoch still ends with an evaluation
    const bool epoch_end =
        step % cfg.epoch_steps == 0 || (step == cfg.max_steps && result.epochs == 0);
    const bool log_now = epoch_end || step % cfg.log_interval == 0 || step == cfg.max_steps;
    std::optional<double> eval;
    if (epoch_end) {
      eval = evaluate(*agent, *eval_env, cfg.eval_steps).mean_return;
      ++result.epochs;
      if (*eval > result.best_eval) {
        result.best_eval = *eval;
        result.best_step = step;
        result.best_agent = std::make_unique<Agent>(*agent);
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    if (log_now && sink != nullptr) {
      MetricRecord r;
      r.run_id = result.run_id;
      r.step = step;
      r.episode = result.episodes;
      if (window.episodes > 0) r.episodic_reward = window.reward_sum / static_cast<double>(window.episodes);
      r.eval_reward = eval;
      r.delta_mean_abs = window.abs_delta / static_cast<double>(window.steps);
      r.entropy = window.entropy / static_cast<double>(window.steps);
      if (window.norms) {
        r.grad_norm_actor = window.norms->actor;
        r.grad_norm_critic = window.norms->critic;
        r.grad_norm_rnn = window.norms->recurrent;
      }
      if (cfg.log_wall_time) {
        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      }
      sink->write(r);
    }
    if (log_now) window.reset();
    if (since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }

  result.final_agent = std::move(agent);
  return result;
}

}  // namespace rtrrl
