#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rtrrl/actor_critic.hpp"
#include "rtrrl/rng.hpp"
#include "rtrrl/types.hpp"

namespace rtrrl {

struct EnvStep {
  Vector obs;
  double reward = 0.0;
  bool terminal = false;
};

struct EnvSpec {
  std::string name;
  Index obs_dim = 0;
  ActionKind action_kind = ActionKind::categorical;
  Index num_actions = 0;  // categorical
  Index action_dim = 0;   // gaussian; actions are squashed into [-1, 1]
  std::int64_t max_episode_steps = 0;
  double reward_bound = 1.0;  // |r| <= reward_bound on every step

  /// Width of the action slot of the agent's input.
  Index action_slot() const {
    return action_kind == ActionKind::categorical ? num_actions : action_dim;
  }
};

// Episodic environment with an explicit reset/step protocol. Calling step()
// before reset() or after a terminal transition throws ProtocolError.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Re-seeds the episode randomness.
  virtual void seed(std::uint64_t s) = 0;

  Vector reset();
  EnvStep step(const Action& a);

  std::int64_t episode_step() const { return t_; }
  bool needs_reset() const { return !started_ || done_; }

 protected:
  virtual Vector do_reset() = 0;
  virtual EnvStep do_step(const Action& a) = 0;

  bool continuing_ = false;

 private:
  bool started_ = false;
  bool done_ = false;
  std::int64_t t_ = 0;
};

/// Continuing stream over an episodic environment: a terminal transition
/// keeps terminal = true but carries the next episode's first observation.
class AutoReset final : public Environment {
 public:
  explicit AutoReset(std::unique_ptr<Environment> inner);
  AutoReset(const AutoReset& other);

  const EnvSpec& spec() const override { return inner_->spec(); }
  std::unique_ptr<Environment> clone() const override;
  void seed(std::uint64_t s) override { inner_->seed(s); }

  Environment& inner() { return *inner_; }

 protected:
  Vector do_reset() override;
  EnvStep do_step(const Action& a) override;

 private:
  std::unique_ptr<Environment> inner_;
};

using EnvParams = std::map<std::string, std::string>;

/// Parses "name{key=value,key=value}" (the braces are optional).
std::pair<std::string, EnvParams> parse_env_string(const std::string& text);
std::string format_env_string(const std::string& name, const EnvParams& params);

/// Builds a registered environment; throws ConfigError for unknown names or
/// parameters.
std::unique_ptr<Environment> make_env(const std::string& name, const EnvParams& params,
                                      std::uint64_t seed);
std::vector<std::string> registered_envs();

// Concrete environments, exposed for tests.

/// A context bit is shown at t = 0; the query flag is raised at t = length
/// and the action taken then is scored +1 (matches the bit) or -1.
/// Observation: [context (n_bits), t / length, query (n_bits)].
class MemoryChain final : public Environment {
 public:
  MemoryChain(int length, int n_bits, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<MemoryChain>(*this); }
  void seed(std::uint64_t s) override { rng_.seed(s); }
  const std::vector<int>& context() const { return context_; }
  int query() const { return query_; }

 protected:
  Vector do_reset() override;
  EnvStep do_step(const Action& a) override;

 private:
  Vector observe() const;

  EnvSpec spec_;
  int length_;
  int n_bits_;
  Rng rng_;
  std::vector<int> context_;
  int query_ = 0;
  int t_ = 0;
};

/// N x N grid descended one row per step. Which action index moves right is
/// flipped per column by a fixed pattern drawn from mapping_seed. Moving right
/// costs 0.01 / N; moving right from the bottom-right column pays +1.
/// Observation: [one-hot row (N), one-hot column (N)].
class DeepSea final : public Environment {
 public:
  DeepSea(int size, std::uint64_t mapping_seed);
  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<DeepSea>(*this); }
  void seed(std::uint64_t) override {}
  /// Action index that moves right in the given column.
  int right_action(int column) const { return right_action_[static_cast<std::size_t>(column)]; }

 protected:
  Vector do_reset() override;
  EnvStep do_step(const Action& a) override;

 private:
  Vector observe() const;

  EnvSpec spec_;
  int size_;
  std::vector<int> right_action_;
  int row_ = 0;
  int column_ = 0;
};

enum class CartPoleMask { none, vel, pos };

/// Classic cart-pole (Euler, dt 0.02, force +-10, 500-step cap, reward 1 per
/// step). mask = vel keeps (x_dot, theta_dot), mask = pos keeps (x, theta).
/// noise_std > 0 adds Gaussian observation noise. With continuous = true the
/// single action is squashed by tanh and scaled to the force range.
class CartPole final : public Environment {
 public:
  struct State {
    double x = 0.0, x_dot = 0.0, theta = 0.0, theta_dot = 0.0;
  };

  CartPole(CartPoleMask mask, double noise_std, bool continuous, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<CartPole>(*this); }
  void seed(std::uint64_t s) override { rng_.seed(s); }

  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

  /// One Euler step of the physics under the given force.
  static State integrate(const State& s, double force);

 protected:
  Vector do_reset() override;
  EnvStep do_step(const Action& a) override;

 private:
  Vector observe();

  EnvSpec spec_;
  CartPoleMask mask_;
  double noise_std_;
  bool continuous_;
  Rng rng_;
  State state_;
  int t_ = 0;
};

/// Two arms paying 1 with probabilities (p, 1 - p), p drawn from {0.1, 0.9}
/// each episode. Observation: [previous reward, t / episode_len].
class BernoulliBandit final : public Environment {
 public:
  BernoulliBandit(int episode_len, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<BernoulliBandit>(*this);
  }
  void seed(std::uint64_t s) override { rng_.seed(s); }
  double arm0_probability() const { return p_; }

 protected:
  Vector do_reset() override;
  EnvStep do_step(const Action& a) override;

 private:
  EnvSpec spec_;
  int episode_len_;
  Rng rng_;
  double p_ = 0.9;
  int t_ = 0;
};

/// The first action picks the umbrella; after chain_len steps the episode
/// pays +1 if it matched the need shown in the observation, else -1. Steps in
/// between pay a zero-mean +-1 distractor reward.
/// Observation: [need, has, 1 - t / chain_len, distractor bits].
class UmbrellaChain final : public Environment {
 public:
  UmbrellaChain(int chain_len, int n_distractor, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<UmbrellaChain>(*this);
  }
  void seed(std::uint64_t s) override { rng_.seed(s); }
  int need() const { return need_; }

 protected:
  Vector do_reset() override;
  EnvStep do_step(const Action& a) override;

 private:
  Vector observe();

  EnvSpec spec_;
  int chain_len_;
  int n_distractor_;
  Rng rng_;
  int need_ = 0;
  int has_ = 0;
  int t_ = 0;
};

/// A random one-hot symbol every step; from step `lag` on the action is
/// scored against the symbol shown lag steps earlier, +-1 / (episode_len - lag),
/// so episode returns lie in [-1, 1].
class RepeatPrevious final : public Environment {
 public:
  RepeatPrevious(int lag, int n_symbols, int episode_len, std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<RepeatPrevious>(*this);
  }
  void seed(std::uint64_t s) override { rng_.seed(s); }
  /// Symbol the current action is scored against (-1 before the lag).
  int target() const;

 protected:
  Vector do_reset() override;
  EnvStep do_step(const Action& a) override;

 private:
  int draw();

  EnvSpec spec_;
  int lag_;
  int n_symbols_;
  int episode_len_;
  Rng rng_;
  std::vector<int> history_;
};

}  // namespace rtrrl
