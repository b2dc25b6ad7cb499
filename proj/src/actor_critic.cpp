#include "rtrrl/actor_critic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace rtrrl {

FeedbackMode parse_feedback_mode(const std::string& s) {
  if (s == "fa") return FeedbackMode::fa;
  if (s == "exact") return FeedbackMode::exact;
  throw ConfigError("unknown feedback mode '" + s + "' (expected fa or exact)");
}

std::string to_string(FeedbackMode m) { return m == FeedbackMode::fa ? "fa" : "exact"; }

HeadParams init_heads(ActionKind kind, Index features, Index actions, Rng& rng,
                      double init_log_std) {
  HeadParams p;
  p.kind = kind;
  p.theta_A = Matrix::Zero(actions, features);
  p.theta_C = Vector::Zero(features);
  if (kind == ActionKind::gaussian) p.log_std = Vector::Constant(actions, init_log_std);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(features)));
  p.B_A.resize(features, actions);
  for (Index c = 0; c < actions; ++c) {
    for (Index r = 0; r < features; ++r) p.B_A(r, c) = normal(rng);
  }
  p.B_C.resize(features);
  for (Index r = 0; r < features; ++r) p.B_C(r) = normal(rng);
  return p;
}

Vector softmax(const Vector& logits) {
  const Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

namespace {

Vector log_softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

}  // namespace

ActionDistribution policy_forward(const HeadParams& heads, const Vector& h) {
  ActionDistribution d;
  d.kind = heads.kind;
  if (heads.kind == ActionKind::categorical) {
    d.logits = heads.theta_A * h;
    d.probs = softmax(d.logits);
  } else {
    d.mean = heads.theta_A * h;
    d.log_std = heads.log_std;
  }
  return d;
}

double value_forward(const Vector& theta_C, const Vector& h) { return theta_C.dot(h); }

Action sample_action(const ActionDistribution& dist, Rng& rng) {
  Action a;
  if (dist.kind == ActionKind::categorical) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    a.index = static_cast<int>(dist.probs.size()) - 1;
    for (Index i = 0; i < dist.probs.size(); ++i) {
      acc += dist.probs(i);
      if (u < acc) {
        a.index = static_cast<int>(i);
        break;
      }
    }
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    a.value.resize(dist.mean.size());
    for (Index i = 0; i < dist.mean.size(); ++i) {
      a.value(i) = dist.mean(i) + std::exp(dist.log_std(i)) * normal(rng);
    }
  }
  return a;
}

Action mode_action(const ActionDistribution& dist) {
  Action a;
  if (dist.kind == ActionKind::categorical) {
    Index best = 0;
    dist.logits.maxCoeff(&best);
    a.index = static_cast<int>(best);
  } else {
    a.value = dist.mean;
  }
  return a;
}

double log_prob(const ActionDistribution& dist, const Action& a) {
  if (dist.kind == ActionKind::categorical) return log_softmax(dist.logits)(a.index);
  double lp = 0.0;
  for (Index i = 0; i < dist.mean.size(); ++i) {
    const double z = (a.value(i) - dist.mean(i)) * std::exp(-dist.log_std(i));
    lp += -0.5 * z * z - dist.log_std(i) - kHalfLog2Pi;
  }
  return lp;
}

DistGrad log_prob_grad(const ActionDistribution& dist, const Action& a) {
  DistGrad g;
  if (dist.kind == ActionKind::categorical) {
    g.d_out = -dist.probs;
    g.d_out(a.index) += 1.0;
    return g;
  }
  const Index n = dist.mean.size();
  g.d_out.resize(n);
  g.d_log_std.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double inv_var = std::exp(-2.0 * dist.log_std(i));
    const double diff = a.value(i) - dist.mean(i);
    g.d_out(i) = diff * inv_var;
    g.d_log_std(i) = diff * diff * inv_var - 1.0;
  }
  return g;
}

EntropyResult entropy_and_grad(const ActionDistribution& dist) {
  EntropyResult r;
  if (dist.kind == ActionKind::categorical) {
    const Vector logp = log_softmax(dist.logits);
    r.value = -(dist.probs.array() * logp.array()).sum();
    // dH/dz_j = -p_j (log p_j + H)
    r.grad.d_out = -(dist.probs.array() * (logp.array() + r.value)).matrix();
    return r;
  }
  const Index n = dist.mean.size();
  r.value = (dist.log_std.array() + 0.5 + kHalfLog2Pi).sum();
  r.grad.d_out = Vector::Zero(n);
  r.grad.d_log_std = Vector::Ones(n);
  return r;
}

double td_error(double r, double gamma, double v, double v_next, bool terminal) {
  return r + (terminal ? 0.0 : gamma * v_next) - v;
}

Vector route_actor_feedback(FeedbackMode mode, const HeadParams& heads, const Vector& dist_grad) {
  return mode == FeedbackMode::fa ? Vector(heads.B_A * dist_grad)
                                  : Vector(heads.theta_A.transpose() * dist_grad);
}

HiddenFeedback route_feedback(FeedbackMode mode, const HeadParams& heads, const Vector& dist_grad) {
  return {mode == FeedbackMode::fa ? heads.B_C : heads.theta_C,
          route_actor_feedback(mode, heads, dist_grad)};
}

EligibilityTraces EligibilityTraces::zeros(const HeadParams& heads, Index recurrent_params) {
  return {Matrix::Zero(heads.theta_A.rows(), heads.theta_A.cols()),
          Vector::Zero(heads.log_std.size()), Vector::Zero(heads.theta_C.size()),
          Vector::Zero(recurrent_params)};
}

void EligibilityTraces::set_zero() {
  e_A.setZero();
  e_log_std.setZero();
  e_C.setZero();
  e_R.setZero();
}

void accumulate_traces(EligibilityTraces& traces, const InstantGrads& grads,
                       const TraceDecay& decay) {
  traces.e_C = decay.gamma * decay.lambda_C * traces.e_C + grads.critic;
  traces.e_A = decay.gamma * decay.lambda_A * traces.e_A + grads.actor;
  if (traces.e_log_std.size() > 0) {
    traces.e_log_std = decay.gamma * decay.lambda_A * traces.e_log_std + grads.log_std;
  }
  traces.e_R = decay.gamma * decay.lambda_R * traces.e_R + grads.recurrent;
}

HeadOptimizers make_optimizers(const OptimizerConfig& cfg, const HeadParams& heads,
                               Index recurrent_params) {
  return {BlockOptimizer(cfg, heads.theta_A.size()), BlockOptimizer(cfg, heads.log_std.size()),
          BlockOptimizer(cfg, heads.theta_C.size()), BlockOptimizer(cfg, recurrent_params)};
}

namespace {

double step_block(const char* name, BlockOptimizer& opt, Eigen::Ref<Vector> params,
                  Vector direction, double lr, double clip) {
  if (!direction.allFinite()) {
    throw NumericFault(std::string("non-finite update for block '") + name + "'");
  }
  direction = -direction;
  const double norm = clip_by_norm(direction, clip);
  opt.step(params, direction, lr);
  if (!params.allFinite()) {
    throw NumericFault(std::string("non-finite parameters in block '") + name + "'");
  }
  return norm;
}

}  // namespace

UpdateDirections UpdateDirections::zeros(const HeadParams& heads, Index recurrent_params) {
  return {Matrix::Zero(heads.theta_A.rows(), heads.theta_A.cols()), Vector::Zero(heads.log_std.size()),
          Vector::Zero(heads.theta_C.size()), Vector::Zero(recurrent_params)};
}

void UpdateDirections::set_zero() {
  actor.setZero();
  log_std.setZero();
  critic.setZero();
  recurrent.setZero();
}

void add_directions(UpdateDirections& out, const EligibilityTraces& traces, double delta,
                    const EntropyGrads* entropy, double eta_h) {
  out.actor += delta * traces.e_A;
  out.log_std += delta * traces.e_log_std;
  out.critic += delta * traces.e_C;
  out.recurrent += delta * traces.e_R;
  if (entropy != nullptr) {
    out.actor += eta_h * entropy->actor;
    if (out.log_std.size() > 0) out.log_std += eta_h * entropy->log_std;
    out.recurrent += eta_h * entropy->recurrent;
  }
}

GradNorms apply_directions(HeadParams& heads, Eigen::Ref<Vector> recurrent_params,
                           const UpdateDirections& dirs, const LearningRates& lrs, double clip,
                           HeadOptimizers& opt) {
  GradNorms norms;
  Eigen::Map<Vector> actor(heads.theta_A.data(), heads.theta_A.size());
  norms.actor = step_block("actor", opt.actor, actor,
                           Eigen::Map<const Vector>(dirs.actor.data(), dirs.actor.size()),
                           lrs.actor, clip);
  if (heads.log_std.size() > 0) {
    step_block("log_std", opt.log_std, heads.log_std, dirs.log_std, lrs.actor, clip);
  }
  norms.critic = step_block("critic", opt.critic, heads.theta_C, dirs.critic, lrs.critic, clip);
  norms.recurrent = step_block("recurrent", opt.recurrent, recurrent_params, dirs.recurrent,
                               lrs.recurrent, clip);
  return norms;
}

GradNorms apply_updates(HeadParams& heads, Eigen::Ref<Vector> recurrent_params,
                        const EligibilityTraces& traces, double delta,
                        const EntropyGrads* entropy, const LearningRates& lrs, double clip,
                        HeadOptimizers& opt) {
  auto dirs = UpdateDirections::zeros(heads, recurrent_params.size());
  add_directions(dirs, traces, delta, entropy, lrs.entropy);
  return apply_directions(heads, recurrent_params, dirs, lrs, clip, opt);
}

}  // namespace rtrrl
