#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rtrrl/actor_critic.hpp"
#include "rtrrl/optimizer.hpp"
#include "rtrrl/oracles.hpp"
#include "rtrrl/verify.hpp"
#include "test_util.hpp"

using namespace rtrrl;
using rtrrl::testing::random_matrix;
using rtrrl::testing::random_vector;

namespace {

HeadParams categorical_heads(Index n, Index actions, std::mt19937_64& rng) {
  Rng r(rng());
  HeadParams h = init_heads(ActionKind::categorical, n, actions, r);
  h.theta_A = random_matrix(actions, n, rng);
  h.theta_C = random_vector(n, rng);
  return h;
}

Action categorical(int i) {
  Action a;
  a.index = i;
  return a;
}

}  // namespace

// policy_forward / value_forward

TEST(PolicyForward, ZeroActorIsUniform) {
  Rng rng(1);
  const HeadParams h = init_heads(ActionKind::categorical, 5, 3, rng);
  const ActionDistribution d = policy_forward(h, Vector::Ones(5));
  for (Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(d.probs(i), 1.0 / 3.0);
}

TEST(PolicyForward, SoftmaxOfLogThree) {
  HeadParams h;
  h.theta_A = (Matrix(2, 1) << std::log(3.0), 0.0).finished();
  const ActionDistribution d = policy_forward(h, Vector::Ones(1));
  EXPECT_NEAR(d.probs(0), 0.75, 1e-15);
  EXPECT_NEAR(d.probs(1), 0.25, 1e-15);
}

TEST(PolicyForward, MatchesNaiveSoftmax) {
  std::mt19937_64 rng(3);
  const HeadParams h = categorical_heads(6, 4, rng);
  const Vector x = random_vector(6, rng);
  const ActionDistribution d = policy_forward(h, x);
  double z = 0.0;
  std::vector<double> e(4);
  for (Index a = 0; a < 4; ++a) {
    double logit = 0.0;
    for (Index j = 0; j < 6; ++j) logit += h.theta_A(a, j) * x(j);
    e[a] = std::exp(logit);
    z += e[a];
  }
  for (Index a = 0; a < 4; ++a) EXPECT_NEAR(d.probs(a), e[a] / z, 1e-12);
  EXPECT_NEAR(d.probs.sum(), 1.0, 1e-15);
}

TEST(PolicyForward, GaussianUsesFreeLogStd) {
  Rng rng(2);
  HeadParams h = init_heads(ActionKind::gaussian, 3, 2, rng, -0.5);
  h.theta_A.setOnes();
  const ActionDistribution d = policy_forward(h, Vector::Constant(3, 0.1));
  EXPECT_NEAR(d.mean(0), 0.3, 1e-15);
  EXPECT_EQ(d.log_std, Vector::Constant(2, -0.5));
  EXPECT_GT(std::exp(d.log_std(0)), 0.0);
}

TEST(ValueForward, Examples) {
  const Vector h = (Vector(3) << 0.3, -1.0, 2.0).finished();
  EXPECT_EQ(value_forward(Vector::Zero(3), h), 0.0);
  EXPECT_EQ(value_forward(Vector::Unit(3, 0), h), 0.3);
  std::mt19937_64 rng(4);
  const Vector w = random_vector(7, rng), x = random_vector(7, rng);
  double ref = 0.0;
  for (Index i = 0; i < 7; ++i) ref += w(i) * x(i);
  EXPECT_NEAR(value_forward(w, x), ref, 1e-15);
}

// sampling

TEST(SampleAction, FrequenciesFollowProbabilities) {
  ActionDistribution d;
  d.logits = (Vector(3) << 0.0, std::log(2.0), std::log(5.0)).finished();
  d.probs = softmax(d.logits);
  Rng rng(7);
  std::vector<int> counts(3, 0);
  const int n = 80'000;
  for (int i = 0; i < n; ++i) ++counts[sample_action(d, rng).index];
  for (int a = 0; a < 3; ++a) {
    const double p = d.probs(a);
    EXPECT_NEAR(counts[a] / double(n), p, 4.0 * std::sqrt(p * (1 - p) / n));
  }
  EXPECT_EQ(mode_action(d).index, 2);
}

TEST(LogProb, GaussianMatchesDensity) {
  ActionDistribution d;
  d.kind = ActionKind::gaussian;
  d.mean = Vector::Constant(1, 0.2);
  d.log_std = Vector::Constant(1, std::log(0.5));
  Action a;
  a.value = Vector::Constant(1, 0.7);
  const double z = (0.7 - 0.2) / 0.5;
  EXPECT_NEAR(log_prob(d, a), -0.5 * z * z - std::log(0.5 * std::sqrt(2 * M_PI)), 1e-14);
}

TEST(LogProbGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  ActionDistribution d;
  d.logits = random_vector(4, rng);
  d.probs = softmax(d.logits);
  const double e = 1e-6;
  const DistGrad g = log_prob_grad(d, categorical(1));
  for (Index j = 0; j < 4; ++j) {
    ActionDistribution p = d, m = d;
    p.logits(j) += e, m.logits(j) -= e;
    p.probs = softmax(p.logits), m.probs = softmax(m.logits);
    EXPECT_NEAR(g.d_out(j), (log_prob(p, categorical(1)) - log_prob(m, categorical(1))) / (2 * e), 1e-8);
  }
  ActionDistribution gd;
  gd.kind = ActionKind::gaussian;
  gd.mean = random_vector(2, rng);
  gd.log_std = random_vector(2, rng, 0.5);
  Action a;
  a.value = random_vector(2, rng);
  const DistGrad gg = log_prob_grad(gd, a);
  for (Index j = 0; j < 2; ++j) {
    ActionDistribution p = gd, m = gd;
    p.mean(j) += e, m.mean(j) -= e;
    EXPECT_NEAR(gg.d_out(j), (log_prob(p, a) - log_prob(m, a)) / (2 * e), 1e-7);
    p = gd, m = gd;
    p.log_std(j) += e, m.log_std(j) -= e;
    EXPECT_NEAR(gg.d_log_std(j), (log_prob(p, a) - log_prob(m, a)) / (2 * e), 1e-7);
  }
}

// td_error

TEST(TdError, Examples) {
  EXPECT_EQ(td_error(1.0, 0.99, 0.0, 0.0, false), 1.0);
  EXPECT_NEAR(td_error(0.0, 0.99, 0.5, 0.5, false), -0.005, 1e-15);
  EXPECT_EQ(td_error(2.0, 0.99, 1.5, 123.0, true), 0.5);
}

// accumulate_traces

namespace {

InstantGrads random_grads(std::mt19937_64& rng) {
  return {random_vector(4, rng), random_matrix(2, 4, rng), Vector(), random_vector(9, rng)};
}

EligibilityTraces empty_traces() {
  HeadParams h;
  h.theta_A = Matrix::Zero(2, 4);
  h.theta_C = Vector::Zero(4);
  return EligibilityTraces::zeros(h, 9);
}

}  // namespace

TEST(AccumulateTraces, FromZeroEqualsInstantGradient) {
  std::mt19937_64 rng(1);
  EligibilityTraces e = empty_traces();
  const InstantGrads g = random_grads(rng);
  accumulate_traces(e, g, {0.99, 0.3, 0.7, 0.9});
  EXPECT_EQ(e.e_C, g.critic);
  EXPECT_EQ(e.e_A, g.actor);
  EXPECT_EQ(e.e_R, g.recurrent);
}

TEST(AccumulateTraces, ZeroDecayIsTdZero) {
  std::mt19937_64 rng(2);
  EligibilityTraces e = empty_traces();
  for (int t = 0; t < 5; ++t) {
    const InstantGrads g = random_grads(rng);
    accumulate_traces(e, g, {0.0, 0.9, 0.9, 0.9});
    EXPECT_EQ(e.e_C, g.critic);
    EXPECT_EQ(e.e_A, g.actor);
    EXPECT_EQ(e.e_R, g.recurrent);
  }
}

TEST(AccumulateTraces, GeometricSumOverThreeSteps) {
  std::mt19937_64 rng(3);
  EligibilityTraces e = empty_traces();
  std::vector<InstantGrads> gs;
  for (int t = 0; t < 3; ++t) {
    gs.push_back(random_grads(rng));
    accumulate_traces(e, gs.back(), {1.0, 0.5, 0.5, 0.5});
  }
  Vector ref_c = Vector::Zero(4), ref_r = Vector::Zero(9);
  Matrix ref_a = Matrix::Zero(2, 4);
  for (int s = 0; s < 3; ++s) {
    const double w = std::pow(0.5, 2 - s);
    ref_c += w * gs[s].critic;
    ref_a += w * gs[s].actor;
    ref_r += w * gs[s].recurrent;
  }
  EXPECT_LT((e.e_C - ref_c).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((e.e_A - ref_a).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((e.e_R - ref_r).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AccumulateTraces, LinearInInstantGradients) {
  std::mt19937_64 rng(4);
  const TraceDecay decay{0.97, 0.8, 0.6, 0.9};
  EligibilityTraces a = empty_traces(), b = empty_traces(), sum = empty_traces();
  for (int t = 0; t < 10; ++t) {
    const InstantGrads ga = random_grads(rng), gb = random_grads(rng);
    const double c = 1.7;
    accumulate_traces(a, ga, decay);
    accumulate_traces(b, gb, decay);
    accumulate_traces(sum,
                      {ga.critic + c * gb.critic, ga.actor + c * gb.actor, Vector(),
                       ga.recurrent + c * gb.recurrent},
                      decay);
    EXPECT_LT((sum.e_C - a.e_C - c * b.e_C).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((sum.e_A - a.e_A - c * b.e_A).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((sum.e_R - a.e_R - c * b.e_R).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// route_feedback

TEST(RouteFeedback, ExactCategoricalIsSoftmaxIdentity) {
  std::mt19937_64 rng(6);
  const HeadParams h = categorical_heads(5, 3, rng);
  const ActionDistribution d = policy_forward(h, random_vector(5, rng));
  const DistGrad g = log_prob_grad(d, categorical(2));
  const HiddenFeedback f = route_feedback(FeedbackMode::exact, h, g.d_out);
  const Vector expect = h.theta_A.transpose() * (Vector::Unit(3, 2) - d.probs);
  EXPECT_LT((f.g_A - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(f.g_C, h.theta_C);
}

TEST(RouteFeedback, FaWithTransposedCopyMatchesExact) {
  std::mt19937_64 rng(7);
  HeadParams h = categorical_heads(5, 3, rng);
  h.B_A = h.theta_A.transpose();
  h.B_C = h.theta_C;
  const Vector dg = random_vector(3, rng);
  const HiddenFeedback fa = route_feedback(FeedbackMode::fa, h, dg);
  const HiddenFeedback ex = route_feedback(FeedbackMode::exact, h, dg);
  EXPECT_EQ(fa.g_A, ex.g_A);
  EXPECT_EQ(fa.g_C, ex.g_C);
}

TEST(RouteFeedback, FaUsesFixedMatrices) {
  std::mt19937_64 rng(8);
  const HeadParams h = categorical_heads(5, 3, rng);
  const Vector dg = random_vector(3, rng);
  const HiddenFeedback f = route_feedback(FeedbackMode::fa, h, dg);
  EXPECT_EQ(f.g_C, h.B_C);
  EXPECT_EQ(f.g_A, Vector(h.B_A * dg));
}

TEST(RouteFeedback, ExactMatchesFiniteDifferencesInHidden) {
  std::mt19937_64 rng(9);
  const HeadParams h = categorical_heads(4, 3, rng);
  const Vector x = random_vector(4, rng);
  const Action a = categorical(0);
  const ActionDistribution d = policy_forward(h, x);
  const HiddenFeedback f = route_feedback(FeedbackMode::exact, h, log_prob_grad(d, a).d_out);
  auto logp = [&](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, log_prob(policy_forward(h, y), a)); };
  auto value = [&](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, value_forward(h.theta_C, y)); };
  const Eigen::MatrixXd jl = oracles::fd_jacobian(logp, x);
  const Eigen::MatrixXd jv = oracles::fd_jacobian(value, x);
  EXPECT_LT(oracles::relative_error(Eigen::VectorXd(jl.row(0).transpose()), f.g_A), 1e-5);
  EXPECT_LT(oracles::relative_error(Eigen::VectorXd(jv.row(0).transpose()), f.g_C), 1e-5);
}

// entropy_and_grad

TEST(Entropy, UniformIsLogNWithZeroGradient) {
  ActionDistribution d;
  d.logits = Vector::Constant(4, 0.3);
  d.probs = softmax(d.logits);
  const EntropyResult r = entropy_and_grad(d);
  EXPECT_NEAR(r.value, std::log(4.0), 1e-15);
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(r.grad.d_out(i), 0.0);
}

TEST(Entropy, DeterministicLimitVanishes) {
  ActionDistribution d;
  for (double gap : {10.0, 30.0, 60.0}) {
    d.logits = (Vector(2) << gap, 0.0).finished();
    d.probs = softmax(d.logits);
    EXPECT_LT(entropy_and_grad(d).value, 2.0 * (gap + 1.0) * std::exp(-gap));
  }
}

TEST(Entropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  ActionDistribution d;
  d.logits = random_vector(5, rng, 2.0);
  d.probs = softmax(d.logits);
  const EntropyResult r = entropy_and_grad(d);
  auto H = [&](const Eigen::VectorXd& z) {
    ActionDistribution q;
    q.logits = z;
    q.probs = softmax(z);
    return Eigen::VectorXd::Constant(1, entropy_and_grad(q).value);
  };
  const Eigen::MatrixXd j = oracles::fd_jacobian(H, d.logits);
  EXPECT_LT(oracles::relative_error(Eigen::VectorXd(j.row(0).transpose()), r.grad.d_out), 1e-6);
}

TEST(Entropy, GaussianClosedForm) {
  ActionDistribution d;
  d.kind = ActionKind::gaussian;
  d.mean = Vector::Zero(2);
  d.log_std = (Vector(2) << 0.0, -1.0).finished();
  const EntropyResult r = entropy_and_grad(d);
  EXPECT_NEAR(r.value, -1.0 + std::log(2 * M_PI * M_E), 1e-14);
  EXPECT_EQ(r.grad.d_log_std, Vector::Ones(2));
}

// apply_updates

namespace {

struct UpdateFixture {
  HeadParams heads;
  Vector rec;
  EligibilityTraces traces;

  explicit UpdateFixture(std::mt19937_64& rng) {
    heads = categorical_heads(4, 2, rng);
    rec = random_vector(6, rng);
    traces = EligibilityTraces::zeros(heads, 6);
    traces.e_A = random_matrix(2, 4, rng, 0.1);
    traces.e_C = random_vector(4, rng, 0.1);
    traces.e_R = random_vector(6, rng, 0.1);
  }
};

}  // namespace

TEST(ApplyUpdates, ZeroErrorLeavesParametersUnchanged) {
  std::mt19937_64 rng(11);
  UpdateFixture f(rng);
  const HeadParams before = f.heads;
  const Vector rec_before = f.rec;
  HeadOptimizers opt = make_optimizers({}, f.heads, 6);
  LearningRates lrs{0.1, 0.1, 0.1, 0.0};
  EntropyGrads ent{random_matrix(2, 4, rng), Vector(), random_vector(6, rng)};
  apply_updates(f.heads, f.rec, f.traces, 0.0, &ent, lrs, 1.0, opt);
  EXPECT_EQ(f.heads.theta_A, before.theta_A);
  EXPECT_EQ(f.heads.theta_C, before.theta_C);
  EXPECT_EQ(f.rec, rec_before);
}

TEST(ApplyUpdates, SgdCriticStepIsAlphaTimesTrace) {
  std::mt19937_64 rng(12);
  UpdateFixture f(rng);
  const Vector h = random_vector(4, rng, 0.2);
  f.traces.e_C = h;
  const Vector before = f.heads.theta_C;
  HeadOptimizers opt = make_optimizers({OptimizerKind::sgd}, f.heads, 6);
  apply_updates(f.heads, f.rec, f.traces, 1.0, nullptr, {0.0, 0.05, 0.0, 0.0}, 0.0, opt);
  EXPECT_LT((f.heads.theta_C - (before + 0.05 * h)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ApplyUpdates, AdamMatchesScalarOracle) {
  std::mt19937_64 rng(13);
  UpdateFixture f(rng);
  HeadOptimizers opt = make_optimizers({}, f.heads, 6);
  const LearningRates lrs{1e-3, 2e-3, 3e-3, 0.0};
  std::vector<oracles::ScalarAdam> ref(6, oracles::ScalarAdam{3e-3});
  Vector expect = f.rec;
  for (int t = 0; t < 25; ++t) {
    f.traces.e_R = random_vector(6, rng, 0.1);
    const double delta = std::uniform_real_distribution<double>(-1, 1)(rng);
    for (Index i = 0; i < 6; ++i) expect(i) = ref[i].step(expect(i), -delta * f.traces.e_R(i));
    apply_updates(f.heads, f.rec, f.traces, delta, nullptr, lrs, 0.0, opt);
    ASSERT_LT((f.rec - expect).cwiseAbs().maxCoeff(), 1e-15) << "step " << t;
  }
}

TEST(ApplyUpdates, ClipsEachBlockToUnitNorm) {
  std::mt19937_64 rng(14);
  UpdateFixture f(rng);
  f.traces.e_C = Vector::Constant(4, 3.0);
  const Vector before = f.heads.theta_C;
  HeadOptimizers opt = make_optimizers({OptimizerKind::sgd}, f.heads, 6);
  const GradNorms n = apply_updates(f.heads, f.rec, f.traces, 1.0, nullptr, {0, 1.0, 0, 0}, 1.0, opt);
  EXPECT_NEAR(n.critic, 6.0, 1e-14);
  EXPECT_NEAR((f.heads.theta_C - before).norm(), 1.0, 1e-14);
}

TEST(ApplyUpdates, EntropyTermIsAdded) {
  std::mt19937_64 rng(15);
  UpdateFixture f(rng);
  const Matrix before = f.heads.theta_A;
  HeadOptimizers opt = make_optimizers({OptimizerKind::sgd}, f.heads, 6);
  const EntropyGrads ent{random_matrix(2, 4, rng), Vector(), random_vector(6, rng)};
  apply_updates(f.heads, f.rec, f.traces, 0.5, &ent, {0.1, 0, 0, 0.01}, 0.0, opt);
  const Matrix expect = before + 0.1 * (0.5 * f.traces.e_A + 0.01 * ent.actor);
  EXPECT_LT((f.heads.theta_A - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ApplyUpdates, NonFiniteUpdateNamesBlock) {
  std::mt19937_64 rng(16);
  UpdateFixture f(rng);
  f.traces.e_R(2) = NAN;
  HeadOptimizers opt = make_optimizers({}, f.heads, 6);
  try {
    apply_updates(f.heads, f.rec, f.traces, 1.0, nullptr, {}, 1.0, opt);
    FAIL() << "expected NumericFault";
  } catch (const NumericFault& e) {
    EXPECT_NE(std::string(e.what()).find("recurrent"), std::string::npos);
  }
}

TEST(Optimizer, ClipByNormReportsOriginalNorm) {
  Vector g = (Vector(2) << 3.0, 4.0).finished();
  EXPECT_EQ(clip_by_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.norm(), 1.0, 1e-15);
  Vector small = (Vector(2) << 0.3, 0.4).finished();
  clip_by_norm(small, 1.0);
  EXPECT_EQ(small, (Vector(2) << 0.3, 0.4).finished());
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
}

// properties

TEST(ActorCriticProperty, TdZeroConvergesOnTwoStateMrp) {
  const Matrix P = (Matrix(2, 2) << 0.3, 0.7, 0.6, 0.4).finished();
  const Vector r = (Vector(2) << 1.0, -0.5).finished();
  const double gamma = 0.9;
  const Vector v = oracles::mrp_value_solver(P, r, gamma);
  const TdRun run = run_td_critic(P, r, gamma, 0.0, 1e-2, 100'000, 7);
  EXPECT_LT((run.averaged_weights - v).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(ActorCriticProperty, PolicyGradientPrefersPayingArm) {
  // a fixed unit feature, a one-step episode per pull: reward 1 for arm 0, 0 for arm 1
  std::vector<double> final_p;
  const int checkpoints = 5, steps = 10'000;
  std::vector<double> mean_p(checkpoints + 1, 0.0);
  const int seeds = 9;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    HeadParams h = init_heads(ActionKind::categorical, 1, 2, rng);
    Vector rec = Vector::Zero(0);
    EligibilityTraces e = EligibilityTraces::zeros(h, 0);
    HeadOptimizers opt = make_optimizers({OptimizerKind::sgd}, h, 0);
    const Vector x = Vector::Ones(1);
    for (int t = 0; t <= steps; ++t) {
      const ActionDistribution d = policy_forward(h, x);
      if (t % (steps / checkpoints) == 0) mean_p[t / (steps / checkpoints)] += d.probs(0) / seeds;
      if (t == steps) {
        final_p.push_back(d.probs(0));
        break;
      }
      const Action a = sample_action(d, rng);
      const double reward = a.index == 0 ? 1.0 : 0.0;
      const double delta = td_error(reward, 0.99, value_forward(h.theta_C, x), 0.0, true);
      e.set_zero();
      accumulate_traces(e, {x, log_prob_grad(d, a).d_out * x.transpose(), Vector(), Vector()}, {});
      apply_updates(h, rec, e, delta, nullptr, {0.1, 0.1, 0.0, 0.0}, 1.0, opt);
    }
  }
  for (int c = 1; c <= checkpoints; ++c) EXPECT_GT(mean_p[c], mean_p[c - 1]);
  std::sort(final_p.begin(), final_p.end());
  EXPECT_GT(final_p[seeds / 2], 0.95);
}
