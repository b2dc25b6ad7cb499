#include "rtrrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace rtrrl {

// ---------------------------------------------------------------- protocol

Vector Environment::reset() {
  started_ = true;
  done_ = false;
  t_ = 0;
  return do_reset();
}

EnvStep Environment::step(const Action& a) {
  if (!started_) throw ProtocolError(spec().name + ": step() before reset()");
  if (done_) throw ProtocolError(spec().name + ": step() after a terminal transition");
  const EnvSpec& sp = spec();
  if (sp.action_kind == ActionKind::categorical &&
      (a.index < 0 || a.index >= static_cast<int>(sp.num_actions))) {
    throw ProtocolError(sp.name + ": action index " + std::to_string(a.index) + " out of range");
  }
  if (sp.action_kind == ActionKind::gaussian && a.value.size() != sp.action_dim) {
    throw ProtocolError(sp.name + ": continuous action has the wrong dimension");
  }
  EnvStep s = do_step(a);
  ++t_;
  if (s.terminal) {
    t_ = 0;
    done_ = !continuing_;
  }
  return s;
}

AutoReset::AutoReset(std::unique_ptr<Environment> inner) : inner_(std::move(inner)) {
  continuing_ = true;
}

AutoReset::AutoReset(const AutoReset& other) : Environment(other), inner_(other.inner_->clone()) {}

std::unique_ptr<Environment> AutoReset::clone() const { return std::make_unique<AutoReset>(*this); }

Vector AutoReset::do_reset() { return inner_->reset(); }

EnvStep AutoReset::do_step(const Action& a) {
  EnvStep s = inner_->step(a);
  if (s.terminal) s.obs = inner_->reset();
  return s;
}

// ------------------------------------------------------------ memory chain

MemoryChain::MemoryChain(int length, int n_bits, std::uint64_t seed)
    : length_(length), n_bits_(n_bits), rng_(seed) {
  if (length < 1) throw ConfigError("memory_chain: length must be >= 1");
  if (n_bits < 1) throw ConfigError("memory_chain: n_bits must be >= 1");
  spec_.name = "memory_chain";
  spec_.obs_dim = 2 * n_bits + 1;
  spec_.num_actions = 2;
  spec_.max_episode_steps = length + 1;
  spec_.reward_bound = 1.0;
  context_.assign(static_cast<std::size_t>(n_bits), 0);
}

Vector MemoryChain::observe() const {
  Vector obs = Vector::Zero(spec_.obs_dim);
  if (t_ == 0) {
    for (int b = 0; b < n_bits_; ++b) obs(b) = 2.0 * context_[static_cast<std::size_t>(b)] - 1.0;
  }
  obs(n_bits_) = static_cast<double>(t_) / length_;
  if (t_ == length_) obs(n_bits_ + 1 + query_) = 1.0;
  return obs;
}

Vector MemoryChain::do_reset() {
  std::bernoulli_distribution coin(0.5);
  for (auto& c : context_) c = coin(rng_) ? 1 : 0;
  query_ = std::uniform_int_distribution<int>(0, n_bits_ - 1)(rng_);
  t_ = 0;
  return observe();
}

EnvStep MemoryChain::do_step(const Action& a) {
  if (t_ == length_) {
    const bool correct = a.index == context_[static_cast<std::size_t>(query_)];
    return {Vector::Zero(spec_.obs_dim), correct ? 1.0 : -1.0, true};
  }
  ++t_;
  return {observe(), 0.0, false};
}

// ---------------------------------------------------------------- deep sea

DeepSea::DeepSea(int size, std::uint64_t mapping_seed) : size_(size) {
  if (size < 2) throw ConfigError("deep_sea: size must be >= 2");
  spec_.name = "deep_sea";
  spec_.obs_dim = 2 * size;
  spec_.num_actions = 2;
  spec_.max_episode_steps = size;
  spec_.reward_bound = 1.0;
  Rng rng(mapping_seed);
  std::bernoulli_distribution coin(0.5);
  for (int c = 0; c < size; ++c) right_action_.push_back(coin(rng) ? 1 : 0);
}

Vector DeepSea::observe() const {
  Vector obs = Vector::Zero(spec_.obs_dim);
  if (row_ < size_) {
    obs(row_) = 1.0;
    obs(size_ + column_) = 1.0;
  }
  return obs;
}

Vector DeepSea::do_reset() {
  row_ = 0;
  column_ = 0;
  return observe();
}

EnvStep DeepSea::do_step(const Action& a) {
  const bool right = a.index == right_action(column_);
  double reward = 0.0;
  if (column_ == size_ - 1 && right) reward += 1.0;
  if (right) {
    column_ = std::min(column_ + 1, size_ - 1);
    reward -= 0.01 / size_;
  } else {
    column_ = std::max(column_ - 1, 0);
  }
  ++row_;
  return {observe(), reward, row_ == size_};
}

// ---------------------------------------------------------------- cartpole

namespace {

constexpr double kGravity = 9.8;
constexpr double kMassCart = 1.0;
constexpr double kMassPole = 0.1;
constexpr double kTotalMass = kMassCart + kMassPole;
constexpr double kHalfLength = 0.5;
constexpr double kPoleMassLength = kMassPole * kHalfLength;
constexpr double kForceMag = 10.0;
constexpr double kTau = 0.02;
constexpr double kThetaThreshold = 12.0 * 2.0 * std::numbers::pi / 360.0;
constexpr double kXThreshold = 2.4;
constexpr int kCartPoleCap = 500;

}  // namespace

CartPole::CartPole(CartPoleMask mask, double noise_std, bool continuous, std::uint64_t seed)
    : mask_(mask), noise_std_(noise_std), continuous_(continuous), rng_(seed) {
  if (noise_std < 0.0) throw ConfigError("cartpole: noise_std must be >= 0");
  spec_.name = "cartpole_masked";
  spec_.obs_dim = mask == CartPoleMask::none ? 4 : 2;
  if (continuous) {
    spec_.action_kind = ActionKind::gaussian;
    spec_.action_dim = 1;
  } else {
    spec_.num_actions = 2;
  }
  spec_.max_episode_steps = kCartPoleCap;
  spec_.reward_bound = 1.0;
}

CartPole::State CartPole::integrate(const State& s, double force) {
  const double cos_t = std::cos(s.theta);
  const double sin_t = std::sin(s.theta);
  const double temp = (force + kPoleMassLength * s.theta_dot * s.theta_dot * sin_t) / kTotalMass;
  const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                           (kHalfLength * (4.0 / 3.0 - kMassPole * cos_t * cos_t / kTotalMass));
  const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;
  State n;
  n.x = s.x + kTau * s.x_dot;
  n.x_dot = s.x_dot + kTau * x_acc;
  n.theta = s.theta + kTau * s.theta_dot;
  n.theta_dot = s.theta_dot + kTau * theta_acc;
  return n;
}

Vector CartPole::observe() {
  Vector obs;
  switch (mask_) {
    case CartPoleMask::none: obs = Vector{{state_.x, state_.x_dot, state_.theta, state_.theta_dot}}; break;
    case CartPoleMask::vel: obs = Vector{{state_.x_dot, state_.theta_dot}}; break;
    case CartPoleMask::pos: obs = Vector{{state_.x, state_.theta}}; break;
  }
  if (noise_std_ > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std_);
    for (Index i = 0; i < obs.size(); ++i) obs(i) += noise(rng_);
  }
  return obs;
}

Vector CartPole::do_reset() {
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  state_.x = u(rng_);
  state_.x_dot = u(rng_);
  state_.theta = u(rng_);
  state_.theta_dot = u(rng_);
  t_ = 0;
  return observe();
}

EnvStep CartPole::do_step(const Action& a) {
  const double force = continuous_ ? kForceMag * std::tanh(a.value(0))
                                   : (a.index == 1 ? kForceMag : -kForceMag);
  state_ = integrate(state_, force);
  ++t_;
  const bool fell = state_.x < -kXThreshold || state_.x > kXThreshold ||
                    state_.theta < -kThetaThreshold || state_.theta > kThetaThreshold;
  return {observe(), 1.0, fell || t_ >= kCartPoleCap};
}

// --------------------------------------------------------- bernoulli bandit

BernoulliBandit::BernoulliBandit(int episode_len, std::uint64_t seed)
    : episode_len_(episode_len), rng_(seed) {
  if (episode_len < 1) throw ConfigError("bernoulli_bandit: episode_len must be >= 1");
  spec_.name = "bernoulli_bandit";
  spec_.obs_dim = 2;
  spec_.num_actions = 2;
  spec_.max_episode_steps = episode_len;
  spec_.reward_bound = 1.0;
}

Vector BernoulliBandit::do_reset() {
  p_ = std::bernoulli_distribution(0.5)(rng_) ? 0.9 : 0.1;
  t_ = 0;
  return Vector::Zero(2);
}

EnvStep BernoulliBandit::do_step(const Action& a) {
  const double prob = a.index == 0 ? p_ : 1.0 - p_;
  const double r = std::bernoulli_distribution(prob)(rng_) ? 1.0 : 0.0;
  ++t_;
  return {Vector{{r, static_cast<double>(t_) / episode_len_}}, r, t_ == episode_len_};
}

// ----------------------------------------------------------- umbrella chain

UmbrellaChain::UmbrellaChain(int chain_len, int n_distractor, std::uint64_t seed)
    : chain_len_(chain_len), n_distractor_(n_distractor), rng_(seed) {
  if (chain_len < 1) throw ConfigError("umbrella_chain: chain_len must be >= 1");
  if (n_distractor < 0) throw ConfigError("umbrella_chain: n_distractor must be >= 0");
  spec_.name = "umbrella_chain";
  spec_.obs_dim = 3 + n_distractor;
  spec_.num_actions = 2;
  spec_.max_episode_steps = chain_len;
  spec_.reward_bound = 1.0;
}

Vector UmbrellaChain::observe() {
  Vector obs(spec_.obs_dim);
  obs(0) = need_;
  obs(1) = has_;
  obs(2) = 1.0 - static_cast<double>(t_) / chain_len_;
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < n_distractor_; ++i) obs(3 + i) = coin(rng_) ? 1.0 : 0.0;
  return obs;
}

Vector UmbrellaChain::do_reset() {
  need_ = std::bernoulli_distribution(0.5)(rng_) ? 1 : 0;
  has_ = 0;
  t_ = 0;
  return observe();
}

EnvStep UmbrellaChain::do_step(const Action& a) {
  if (t_ == 0) has_ = a.index;
  ++t_;
  if (t_ == chain_len_) {
    return {Vector::Zero(spec_.obs_dim), has_ == need_ ? 1.0 : -1.0, true};
  }
  const double r = std::bernoulli_distribution(0.5)(rng_) ? 1.0 : -1.0;
  return {observe(), r, false};
}

// ---------------------------------------------------------- repeat previous

RepeatPrevious::RepeatPrevious(int lag, int n_symbols, int episode_len, std::uint64_t seed)
    : lag_(lag), n_symbols_(n_symbols), episode_len_(episode_len), rng_(seed) {
  if (lag < 0) throw ConfigError("repeat_previous: lag must be >= 0");
  if (n_symbols < 2) throw ConfigError("repeat_previous: n_symbols must be >= 2");
  if (episode_len <= lag) throw ConfigError("repeat_previous: episode_len must exceed lag");
  spec_.name = "repeat_previous";
  spec_.obs_dim = n_symbols;
  spec_.num_actions = n_symbols;
  spec_.max_episode_steps = episode_len;
  spec_.reward_bound = 1.0 / (episode_len - lag);
}

int RepeatPrevious::draw() { return std::uniform_int_distribution<int>(0, n_symbols_ - 1)(rng_); }

int RepeatPrevious::target() const {
  const auto t = static_cast<int>(history_.size()) - 1;
  return t >= lag_ ? history_[static_cast<std::size_t>(t - lag_)] : -1;
}

Vector RepeatPrevious::do_reset() {
  history_.assign(1, draw());
  Vector obs = Vector::Zero(n_symbols_);
  obs(history_.back()) = 1.0;
  return obs;
}

EnvStep RepeatPrevious::do_step(const Action& a) {
  const int want = target();
  double r = 0.0;
  if (want >= 0) r = (a.index == want ? 1.0 : -1.0) / (episode_len_ - lag_);
  if (static_cast<int>(history_.size()) == episode_len_) {
    return {Vector::Zero(n_symbols_), r, true};
  }
  history_.push_back(draw());
  Vector obs = Vector::Zero(n_symbols_);
  obs(history_.back()) = 1.0;
  return {obs, r, false};
}

// ---------------------------------------------------------------- registry

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

class ParamReader {
 public:
  ParamReader(std::string env, const EnvParams& params) : env_(std::move(env)), params_(params) {}

  int get_int(const std::string& key, int fallback) {
    used_.insert(key);
    auto it = params_.find(key);
    if (it == params_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const int v = std::stoi(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(env_ + ": parameter '" + key + "' expects an integer, got '" + it->second + "'");
    }
  }

  double get_double(const std::string& key, double fallback) {
    used_.insert(key);
    auto it = params_.find(key);
    if (it == params_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(env_ + ": parameter '" + key + "' expects a number, got '" + it->second + "'");
    }
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = params_.find(key);
    return it == params_.end() ? fallback : it->second;
  }

  void finish() const {
    for (const auto& [k, v] : params_) {
      if (!used_.count(k)) throw ConfigError(env_ + ": unknown parameter '" + k + "'");
    }
  }

 private:
  std::string env_;
  const EnvParams& params_;
  std::set<std::string> used_;
};

CartPoleMask parse_mask(const std::string& s) {
  if (s == "vel") return CartPoleMask::vel;
  if (s == "pos") return CartPoleMask::pos;
  if (s == "none") return CartPoleMask::none;
  throw ConfigError("cartpole: mask must be vel, pos or none, got '" + s + "'");
}

using Factory = std::function<std::unique_ptr<Environment>(ParamReader&, std::uint64_t)>;

std::unique_ptr<Environment> cartpole_factory(ParamReader& p, std::uint64_t seed,
                                              const std::string& mask, double noise) {
  auto env = std::make_unique<CartPole>(parse_mask(p.get_string("mask", mask)),
                                        p.get_double("noise_std", noise),
                                        p.get_int("continuous", 0) != 0, seed);
  return env;
}

const std::map<std::string, Factory>& registry() {
  static const std::map<std::string, Factory> r = {
      {"memory_chain",
       [](ParamReader& p, std::uint64_t s) {
         return std::make_unique<MemoryChain>(p.get_int("length", 4), p.get_int("n_bits", 1), s);
       }},
      {"deep_sea",
       [](ParamReader& p, std::uint64_t) {
         return std::make_unique<DeepSea>(p.get_int("size", 4),
                                          static_cast<std::uint64_t>(p.get_int("mapping_seed", 0)));
       }},
      {"cartpole_masked",
       [](ParamReader& p, std::uint64_t s) { return cartpole_factory(p, s, "vel", 0.0); }},
      {"stateless_cartpole",
       [](ParamReader& p, std::uint64_t s) { return cartpole_factory(p, s, "pos", 0.0); }},
      {"noisy_stateless_cartpole",
       [](ParamReader& p, std::uint64_t s) { return cartpole_factory(p, s, "pos", 0.1); }},
      {"bernoulli_bandit",
       [](ParamReader& p, std::uint64_t s) {
         return std::make_unique<BernoulliBandit>(p.get_int("episode_len", 100), s);
       }},
      {"umbrella_chain",
       [](ParamReader& p, std::uint64_t s) {
         return std::make_unique<UmbrellaChain>(p.get_int("chain_len", 10),
                                                p.get_int("n_distractor", 20), s);
       }},
      {"repeat_previous",
       [](ParamReader& p, std::uint64_t s) {
         return std::make_unique<RepeatPrevious>(p.get_int("lag", 4), p.get_int("n_symbols", 4),
                                                 p.get_int("episode_len", 64), s);
       }},
  };
  return r;
}

}  // namespace

std::pair<std::string, EnvParams> parse_env_string(const std::string& text) {
  const auto brace = text.find('{');
  std::string name = trim(text.substr(0, brace));
  EnvParams params;
  if (brace != std::string::npos) {
    const auto close = text.rfind('}');
    if (close == std::string::npos || close < brace || trim(text.substr(close + 1)) != "") {
      throw ConfigError("malformed environment string '" + text + "'");
    }
    std::stringstream body(text.substr(brace + 1, close - brace - 1));
    std::string item;
    while (std::getline(body, item, ',')) {
      if (trim(item).empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("malformed environment parameter '" + item + "'");
      params[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
    }
  }
  if (name.empty()) throw ConfigError("empty environment name");
  return {name, params};
}

std::string format_env_string(const std::string& name, const EnvParams& params) {
  std::string s = name;
  if (!params.empty()) {
    s += '{';
    bool first = true;
    for (const auto& [k, v] : params) {
      if (!first) s += ',';
      s += k + '=' + v;
      first = false;
    }
    s += '}';
  }
  return s;
}

std::unique_ptr<Environment> make_env(const std::string& name, const EnvParams& params,
                                      std::uint64_t seed) {
  const auto& r = registry();
  auto it = r.find(name);
  if (it == r.end()) throw ConfigError("unknown environment '" + name + "'");
  ParamReader reader(name, params);
  auto env = it->second(reader, seed);
  reader.finish();
  return env;
}

std::vector<std::string> registered_envs() {
  std::vector<std::string> names;
  for (const auto& [k, v] : registry()) names.push_back(k);
  return names;
}

}  // namespace rtrrl
