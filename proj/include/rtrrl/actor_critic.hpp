#pragma once

#include <string>

#include "rtrrl/optimizer.hpp"
#include "rtrrl/rng.hpp"
#include "rtrrl/types.hpp"

namespace rtrrl {

enum class ActionKind { categorical, gaussian };
enum class FeedbackMode { fa, exact };

FeedbackMode parse_feedback_mode(const std::string& s);
std::string to_string(FeedbackMode m);

// Linear actor and critic on the shared hidden features, plus the fixed
// random matrices that carry their errors back into the recurrent layer.
struct HeadParams {
  ActionKind kind = ActionKind::categorical;
  Matrix theta_A;  // A x N: logits (categorical) or action mean (gaussian)
  Vector log_std;  // gaussian only: state-independent, one per action dim
  Vector theta_C;  // N
  Matrix B_A;      // N x A, never updated
  Vector B_C;      // N, never updated

  Index feature_size() const { return theta_C.size(); }
  Index action_size() const { return theta_A.rows(); }
};

/// Zero actor/critic (uniform initial policy); B_A, B_C ~ N(0, 1/N).
HeadParams init_heads(ActionKind kind, Index features, Index actions, Rng& rng,
                      double init_log_std = 0.0);

struct ActionDistribution {
  ActionKind kind = ActionKind::categorical;
  Vector logits;  // categorical
  Vector probs;   // categorical, softmax(logits)
  Vector mean;    // gaussian
  Vector log_std; // gaussian
};

struct Action {
  int index = 0;  // categorical
  Vector value;   // gaussian, pre-squash sample
};

ActionDistribution policy_forward(const HeadParams& heads, const Vector& h);
double value_forward(const Vector& theta_C, const Vector& h);

/// Numerically stable softmax.
Vector softmax(const Vector& logits);

Action sample_action(const ActionDistribution& dist, Rng& rng);
/// argmax for categorical, mean for gaussian.
Action mode_action(const ActionDistribution& dist);

double log_prob(const ActionDistribution& dist, const Action& a);

// Gradient of log pi[a] (or of the entropy) w.r.t. the distribution
// parameters: logits for categorical, (mean, log_std) for gaussian.
struct DistGrad {
  Vector d_out;      // logits or mean
  Vector d_log_std;  // gaussian only
};
DistGrad log_prob_grad(const ActionDistribution& dist, const Action& a);

struct EntropyResult {
  double value = 0.0;
  DistGrad grad;
};
EntropyResult entropy_and_grad(const ActionDistribution& dist);

/// r + gamma * v_next * (1 - terminal) - v
double td_error(double r, double gamma, double v, double v_next, bool terminal);

struct HiddenFeedback {
  Vector g_C;
  Vector g_A;
};

/// Error signals delivered at the hidden features. fa: g_C = B_C, g_A = B_A d;
/// exact: g_C = theta_C, g_A = theta_A^T d.
HiddenFeedback route_feedback(FeedbackMode mode, const HeadParams& heads, const Vector& dist_grad);

/// The actor half of route_feedback alone (used for the entropy gradient).
Vector route_actor_feedback(FeedbackMode mode, const HeadParams& heads, const Vector& dist_grad);

struct EligibilityTraces {
  Matrix e_A;
  Vector e_log_std;
  Vector e_C;
  Vector e_R;  // flat, laid out like the recurrent core's parameters

  static EligibilityTraces zeros(const HeadParams& heads, Index recurrent_params);
  void set_zero();
};

struct TraceDecay {
  double gamma = 0.99;
  double lambda_A = 0.9;
  double lambda_C = 0.9;
  double lambda_R = 0.9;
};

// Instantaneous gradients folded into the traces at one step.
struct InstantGrads {
  Vector critic;     // d v / d theta_C = h
  Matrix actor;      // d log pi[a] / d theta_A
  Vector log_std;    // d log pi[a] / d log_std
  Vector recurrent;  // J (g_C + eta_A g_A)
};

/// e <- gamma * lambda * e + g for every block.
void accumulate_traces(EligibilityTraces& traces, const InstantGrads& grads, const TraceDecay& decay);

struct LearningRates {
  double actor = 1e-4;
  double critic = 1e-4;
  double recurrent = 1e-4;
  double entropy = 1e-5;  // eta_H
};

// Entropy gradient w.r.t. every parameter block, unscaled by eta_H.
struct EntropyGrads {
  Matrix actor;
  Vector log_std;
  Vector recurrent;
};

struct HeadOptimizers {
  BlockOptimizer actor;
  BlockOptimizer log_std;
  BlockOptimizer critic;
  BlockOptimizer recurrent;
};

HeadOptimizers make_optimizers(const OptimizerConfig& cfg, const HeadParams& heads,
                               Index recurrent_params);

struct GradNorms {
  double actor = 0.0;
  double critic = 0.0;
  double recurrent = 0.0;
};

/// Steps every block along delta * e + eta_H * dH (the critic has no
/// entropy term). The optimizer sees the negated direction as its gradient;
/// each block's gradient is clipped to norm clip (clip <= 0 disables).
/// Returns the pre-clip gradient norms. Throws NumericFault naming the block
/// when an update is not finite.
GradNorms apply_updates(HeadParams& heads, Eigen::Ref<Vector> recurrent_params,
                        const EligibilityTraces& traces, double delta,
                        const EntropyGrads* entropy, const LearningRates& lrs, double clip,
                        HeadOptimizers& opt);

// Ascent directions per block, delta * e + eta_H * dH, summed over the steps
// of one update period.
struct UpdateDirections {
  Matrix actor;
  Vector log_std;
  Vector critic;
  Vector recurrent;

  static UpdateDirections zeros(const HeadParams& heads, Index recurrent_params);
  void set_zero();
};

void add_directions(UpdateDirections& out, const EligibilityTraces& traces, double delta,
                    const EntropyGrads* entropy, double eta_h);
GradNorms apply_directions(HeadParams& heads, Eigen::Ref<Vector> recurrent_params,
                           const UpdateDirections& dirs, const LearningRates& lrs, double clip,
                           HeadOptimizers& opt);

}  // namespace rtrrl
