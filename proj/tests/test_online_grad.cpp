#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rtrrl/online_grad.hpp"
#include "rtrrl/oracles.hpp"
#include "test_util.hpp"

using namespace rtrrl;
using rtrrl::testing::random_cmatrix;
using rtrrl::testing::random_cvector;
using rtrrl::testing::random_inputs;
using rtrrl::testing::random_matrix;
using rtrrl::testing::random_vector;

namespace {

CtRnnParams random_ctrnn(Index n, Index in, std::mt19937_64& rng, int k = 1) {
  CtRnnParams p;
  p.W = random_matrix(n, in + n + 1, rng);
  p.tau = Vector::Ones(n) + random_vector(n, rng).cwiseAbs() * 2.0;
  p.k = k;
  p.dt = 1.0 / k;
  return p;
}

oracles::CtRnnReference reference(const CtRnnParams& p) { return {p.W, p.tau, p.dt, p.k}; }

RtrlTrace run_rtrl(const CtRnnParams& p, const std::vector<Vector>& xs, Vector* h_out = nullptr) {
  Vector h = Vector::Zero(p.hidden_size());
  RtrlTrace J = RtrlTrace::zeros(p);
  for (const Vector& x : xs) {
    auto r = rtrl_step(p, h, x, J);
    h = r.h;
    J = r.J;
  }
  if (h_out) *h_out = h;
  return J;
}

LruParams random_lru(Index n, Index in, std::mt19937_64& rng) {
  LruParams p;
  std::uniform_real_distribution<double> r(0.5, 0.95), ph(0.0, 3.0);
  p.lambda.resize(n);
  for (Index i = 0; i < n; ++i) p.lambda(i) = std::polar(r(rng), ph(rng));
  p.B_in = random_cmatrix(n, in, rng);
  p.C_out = CMatrix::Zero(1, n);
  p.D_skip = Matrix::Zero(1, in);
  return p;
}

}  // namespace

// rtrl_step

TEST(RtrlStep, NoRecurrenceOneStepIsImmediateTerm) {
  std::mt19937_64 rng(1);
  CtRnnParams p = random_ctrnn(3, 2, rng);
  p.W.middleCols(2, 3).setZero();
  const Vector h = random_vector(3, rng);
  const Vector x = random_vector(2, rng);
  const auto r = rtrl_step(p, h, x, RtrlTrace::zeros(p));
  const CtRnnStep s = ctrnn_step(p, h, x);
  Matrix expect = Matrix::Zero(3, 3 * p.xi_size());
  for (Index i = 0; i < 3; ++i)
    for (Index k = 0; k < p.xi_size(); ++k)
      expect(i, i + k * 3) = s.trace.act_deriv(i) * s.trace.xi(k) / p.tau(i);
  EXPECT_LT((r.J.W - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RtrlStep, ZeroStepsLeavesZeroTrace) {
  std::mt19937_64 rng(1);
  const CtRnnParams p = random_ctrnn(3, 2, rng);
  const RtrlTrace J = run_rtrl(p, {});
  EXPECT_TRUE(J.W.isZero(0.0));
  EXPECT_TRUE(J.tau.isZero(0.0));
}

TEST(RtrlStep, SevenStepsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const CtRnnParams p = random_ctrnn(3, 2, rng);
  const auto xs = random_inputs(2, 7, rng);
  const RtrlTrace J = run_rtrl(p, xs);

  const auto ref = reference(p);
  auto rollout_w = [&](const Eigen::VectorXd& flat) {
    auto net = ref;
    net.W = Eigen::Map<const Eigen::MatrixXd>(flat.data(), 3, p.xi_size());
    return oracles::ctrnn_rollout(net, Eigen::VectorXd::Zero(3), xs);
  };
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(p.W.data(), p.W.size());
  EXPECT_LT(oracles::relative_error(J.W, oracles::fd_jacobian(rollout_w, flat)), 1e-4);

  auto rollout_tau = [&](const Eigen::VectorXd& tau) {
    auto net = ref;
    net.tau = tau;
    return oracles::ctrnn_rollout(net, Eigen::VectorXd::Zero(3), xs);
  };
  EXPECT_LT(oracles::relative_error(J.tau, oracles::fd_jacobian(rollout_tau, p.tau)), 1e-4);
}

TEST(RtrlStep, SubstepsMatchFiniteDifferences) {
  std::mt19937_64 rng(17);
  const CtRnnParams p = random_ctrnn(3, 1, rng, 4);
  const auto xs = random_inputs(1, 5, rng);
  const RtrlTrace J = run_rtrl(p, xs);
  auto rollout_w = [&](const Eigen::VectorXd& flat) {
    auto net = reference(p);
    net.W = Eigen::Map<const Eigen::MatrixXd>(flat.data(), 3, p.xi_size());
    return oracles::ctrnn_rollout(net, Eigen::VectorXd::Zero(3), xs);
  };
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(p.W.data(), p.W.size());
  EXPECT_LT(oracles::relative_error(J.W, oracles::fd_jacobian(rollout_w, flat)), 1e-4);
}

TEST(RtrlStep, WrongTraceShapeIsConfigError) {
  std::mt19937_64 rng(1);
  const CtRnnParams p = random_ctrnn(3, 2, rng);
  RtrlTrace J = RtrlTrace::zeros(p);
  J.W.resize(3, 4);
  EXPECT_THROW(rtrl_step(p, Vector::Zero(3), Vector::Zero(2), J), ConfigError);
}

TEST(RtrlStep, NonFiniteTraceIsNumericFault) {
  std::mt19937_64 rng(1);
  const CtRnnParams p = random_ctrnn(3, 2, rng);
  RtrlTrace J = RtrlTrace::zeros(p);
  J.W(0, 0) = INFINITY;
  EXPECT_THROW(rtrl_step(p, Vector::Zero(3), Vector::Zero(2), J), NumericFault);
}

// rflo_step

TEST(RfloStep, UnitTauHasNoMemory) {
  std::mt19937_64 rng(2);
  CtRnnParams p = random_ctrnn(4, 2, rng);
  p.tau.setOnes();
  RfloTrace J{random_matrix(4, p.xi_size(), rng), random_vector(4, rng)};
  const Vector h = random_vector(4, rng);
  const Vector x = random_vector(2, rng);
  const auto r = rflo_step(p, h, x, J);
  const CtRnnStep s = ctrnn_step(p, h, x);
  const Matrix expect = s.trace.act_deriv * s.trace.xi.transpose();
  EXPECT_EQ(r.J.W, expect);
}

TEST(RfloStep, EqualsRtrlDiagonalBlocksWithoutRecurrence) {
  std::mt19937_64 rng(3);
  CtRnnParams p = random_ctrnn(4, 2, rng);
  p.W.middleCols(2, 4).setZero();
  Vector hr = Vector::Zero(4), hf = hr;
  RtrlTrace Jr = RtrlTrace::zeros(p);
  RfloTrace Jf = RfloTrace::zeros(p);
  for (int t = 0; t < 20; ++t) {
    const Vector x = random_vector(2, rng);
    auto a = rtrl_step(p, hr, x, Jr);
    auto b = rflo_step(p, hf, x, Jf);
    hr = a.h, Jr = a.J, hf = b.h, Jf = b.J;
    for (Index i = 0; i < 4; ++i) {
      for (Index k = 0; k < p.xi_size(); ++k) {
        ASSERT_NEAR(Jf.W(i, k), Jr.W(i, i + k * 4), 1e-12) << "step " << t;
      }
      ASSERT_NEAR(Jf.tau(i), Jr.tau(i, i), 1e-12);
    }
  }
}

TEST(RfloStep, TauTraceMatchesScalarRecurrence) {
  std::mt19937_64 rng(4);
  const CtRnnParams p = random_ctrnn(5, 2, rng);
  const auto xs = random_inputs(2, 20, rng);
  Vector h = Vector::Zero(5);
  RfloTrace J = RfloTrace::zeros(p);
  for (const Vector& x : xs) {
    auto r = rflo_step(p, h, x, J);
    h = r.h, J = r.J;
  }
  const Eigen::VectorXd ref = oracles::local_tau_trace(reference(p), Eigen::VectorXd::Zero(5), xs);
  EXPECT_LT((J.tau - ref).cwiseAbs().maxCoeff(), 1e-12);
}

// lru_rtrl_step

TEST(LruRtrlStep, ZeroLambdaTraceIsStateAndInput) {
  std::mt19937_64 rng(5);
  LruParams p = random_lru(3, 2, rng);
  p.lambda.setZero();
  const CVector h = random_cvector(3, rng);
  const Vector x = random_vector(2, rng);
  LruTrace J{random_cvector(3, rng), random_cmatrix(3, 2, rng)};
  const auto r = lru_rtrl_step(p, h, x, J);
  EXPECT_EQ(r.J.lambda, h);
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(CVector(r.J.B.row(i).transpose()), CVector(x.cast<Complex>()));
}

TEST(LruRtrlStep, ZeroInputKeepsInputTraceZero) {
  std::mt19937_64 rng(5);
  const LruParams p = random_lru(3, 2, rng);
  CVector h = random_cvector(3, rng);
  LruTrace J = LruTrace::zeros(p);
  for (int t = 0; t < 10; ++t) {
    auto r = lru_rtrl_step(p, h, Vector::Zero(2), J);
    h = r.h, J = r.J;
  }
  EXPECT_TRUE(J.B.isZero(0.0));
}

TEST(LruRtrlStep, NineStepsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  const LruParams p = random_lru(4, 2, rng);
  const auto xs = random_inputs(2, 9, rng);
  CVector h = CVector::Zero(4);
  LruTrace J = LruTrace::zeros(p);
  for (const Vector& x : xs) {
    auto r = lru_rtrl_step(p, h, x, J);
    h = r.h, J = r.J;
  }
  auto rollout = [&](const Eigen::VectorXcd& lambda) {
    return oracles::lru_rollout(lambda, p.B_in, Eigen::VectorXcd::Zero(4), xs);
  };
  const auto fd = oracles::fd_jacobian(rollout, p.lambda);
  // holomorphic in lambda: d h / d Re = s, d h / d Im = i s, nothing off the diagonal
  const CMatrix expect_re = J.lambda.asDiagonal();
  const CMatrix expect_im = Complex(0, 1) * expect_re;
  EXPECT_LT(oracles::relative_error(fd.d_re, expect_re), 1e-5);
  EXPECT_LT(oracles::relative_error(fd.d_im, expect_im), 1e-5);
}

// apply_feedback

TEST(ApplyFeedback, ZeroErrorGivesZeroGradients) {
  std::mt19937_64 rng(6);
  const CtRnnParams p = random_ctrnn(3, 2, rng);
  const RtrlTrace J = run_rtrl(p, random_inputs(2, 4, rng));
  const CtRnnGrad g = apply_feedback(J, Vector::Zero(3));
  EXPECT_TRUE(g.W.isZero(0.0));
  EXPECT_TRUE(g.tau.isZero(0.0));
  const RfloTrace Jf{random_matrix(3, p.xi_size(), rng), random_vector(3, rng)};
  EXPECT_TRUE(apply_feedback(Jf, Vector::Zero(3)).W.isZero(0.0));
  const LruTrace Jl{random_cvector(3, rng), random_cmatrix(3, 2, rng)};
  const LruGrad gl = apply_feedback(Jl, CVector::Zero(3));
  EXPECT_TRUE(gl.lambda.isZero(0.0));
  EXPECT_TRUE(gl.B.isZero(0.0));
}

TEST(ApplyFeedback, RfloBasisErrorTouchesOneRow) {
  std::mt19937_64 rng(6);
  const RfloTrace J{random_matrix(4, 7, rng), random_vector(4, rng)};
  const CtRnnGrad g = apply_feedback(J, Vector::Unit(4, 2));
  for (Index i = 0; i < 4; ++i) {
    if (i == 2) {
      EXPECT_EQ(Vector(g.W.row(i).transpose()), Vector(J.W.row(i).transpose()));
    } else {
      EXPECT_TRUE(g.W.row(i).isZero(0.0));
      EXPECT_EQ(g.tau(i), 0.0);
    }
  }
}

TEST(ApplyFeedback, RtrlMatchesTripleLoop) {
  std::mt19937_64 rng(8);
  const Index n = 3, z = 6;
  const RtrlTrace J{random_matrix(n, n * z, rng), random_matrix(n, n, rng)};
  const Vector eps = random_vector(n, rng);
  const CtRnnGrad g = apply_feedback(J, eps);
  Matrix ref = Matrix::Zero(n, z);
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < z; ++k)
      for (Index i = 0; i < n; ++i) ref(j, k) += J.W(i, j + k * n) * eps(i);
  EXPECT_LT((g.W - ref).cwiseAbs().maxCoeff(), 1e-14);
  Vector ref_tau = Vector::Zero(n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) ref_tau(j) += J.tau(i, j) * eps(i);
  EXPECT_LT((g.tau - ref_tau).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ApplyFeedback, LruMatchesUnrolledReverseAccumulation) {
  std::mt19937_64 rng(10);
  const LruParams p = random_lru(4, 3, rng);
  const auto xs = random_inputs(3, 12, rng);
  CVector h = CVector::Zero(4);
  LruTrace J = LruTrace::zeros(p);
  for (const Vector& x : xs) {
    auto r = lru_rtrl_step(p, h, x, J);
    h = r.h, J = r.J;
  }
  const CVector eps = random_cvector(4, rng);
  const LruGrad g = apply_feedback(J, eps);
  const auto ref = oracles::lru_unrolled_grad(p.lambda, p.B_in, Eigen::VectorXcd::Zero(4), xs, eps);
  EXPECT_LT(oracles::relative_error(g.lambda, ref.lambda), 1e-10);
  EXPECT_LT(oracles::relative_error(g.B, ref.B), 1e-10);
}

// properties

TEST(OnlineGradProperty, RtrlEqualsUnrolledGradient) {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 12; ++rep) {
    const Index n = 2 + rep % 3, in = 1 + rep % 2;
    const int T = 1 + rep;
    const CtRnnParams p = random_ctrnn(n, in, rng, rep % 4 == 3 ? 2 : 1);
    const auto xs = random_inputs(in, T, rng);
    const RtrlTrace J = run_rtrl(p, xs);
    const Vector eps = random_vector(n, rng);
    const CtRnnGrad g = apply_feedback(J, eps);
    const auto ref = oracles::unrolled_grad(reference(p), Eigen::VectorXd::Zero(n), xs, eps);
    EXPECT_LT(oracles::relative_error(g.W, ref.W), 1e-6) << "instance " << rep;
    EXPECT_LT(oracles::relative_error(g.tau, ref.tau), 1e-6) << "instance " << rep;
  }
}

TEST(OnlineGradProperty, DiagonalRtrlEqualsFiniteDifferencesForB) {
  std::mt19937_64 rng(31);
  for (int T : {1, 6, 12}) {
    const LruParams p = random_lru(3, 2, rng);
    const auto xs = random_inputs(2, T, rng);
    CVector h = CVector::Zero(3);
    LruTrace J = LruTrace::zeros(p);
    for (const Vector& x : xs) {
      auto r = lru_rtrl_step(p, h, x, J);
      h = r.h, J = r.J;
    }
    auto rollout = [&](const Eigen::VectorXcd& flat) {
      const Eigen::MatrixXcd B = Eigen::Map<const Eigen::MatrixXcd>(flat.data(), 3, 2);
      return oracles::lru_rollout(p.lambda, B, Eigen::VectorXcd::Zero(3), xs);
    };
    const Eigen::VectorXcd flat = Eigen::Map<const Eigen::VectorXcd>(p.B_in.data(), 6);
    const auto fd = oracles::fd_jacobian(rollout, flat);
    CMatrix expect = CMatrix::Zero(3, 6);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 2; ++j) expect(i, i + 3 * j) = J.B(i, j);
    EXPECT_LT(oracles::relative_error(fd.d_re, expect), 1e-5) << "T = " << T;
    EXPECT_LT(oracles::relative_error(fd.d_im, CMatrix(Complex(0, 1) * expect)), 1e-5) << "T = " << T;
  }
}

TEST(OnlineGradProperty, RfloEqualsRtrlWithRecurrenceZeroedEachStep) {
  std::mt19937_64 rng(12);
  CtRnnParams p = random_ctrnn(5, 3, rng);
  Vector hr = Vector::Zero(5), hf = hr;
  RtrlTrace Jr = RtrlTrace::zeros(p);
  RfloTrace Jf = RfloTrace::zeros(p);
  for (int t = 0; t < 50; ++t) {
    p.W.middleCols(3, 5).setZero();
    const Vector x = random_vector(3, rng);
    auto a = rtrl_step(p, hr, x, Jr);
    auto b = rflo_step(p, hf, x, Jf);
    hr = a.h, Jr = a.J, hf = b.h, Jf = b.J;
    const Vector eps = random_vector(5, rng);
    ASSERT_LT((apply_feedback(Jr, eps).W - apply_feedback(Jf, eps).W).cwiseAbs().maxCoeff(), 1e-12);
    // a small drift of the other weights between steps, as during training
    p.W += 1e-3 * random_matrix(5, p.xi_size(), rng);
  }
}

TEST(OnlineGradProperty, RfloTraceStaysBounded) {
  std::mt19937_64 rng(13);
  CtRnnParams p = random_ctrnn(8, 2, rng);
  p.tau = Vector::Constant(8, 1.05) + random_vector(8, rng).cwiseAbs() * 5.0;
  Vector h = Vector::Zero(8);
  RfloTrace J = RfloTrace::zeros(p);
  double sup_immediate = 0.0, worst = 0.0;
  for (int t = 0; t < 10'000; ++t) {
    const Vector x = random_vector(2, rng);
    const CtRnnStep s = ctrnn_step(p, h, x);
    for (Index i = 0; i < 8; ++i) {
      sup_immediate = std::max(sup_immediate, s.trace.act_deriv(i) * s.trace.xi.norm());
    }
    auto r = rflo_step(p, h, x, J);
    h = r.h, J = r.J;
    worst = std::max(worst, J.W.rowwise().norm().maxCoeff());
  }
  EXPECT_LE(worst, sup_immediate * p.tau.maxCoeff());
}

TEST(OnlineGradProperty, CostScalesWithTraceSize) {
  auto ops = [](Index n, Index in, int which) {
    std::mt19937_64 rng(1);
    const CtRnnParams p = random_ctrnn(n, in, rng);
    const Vector x = Vector::Zero(in), h = Vector::Zero(n);
    reset_trace_op_count();
    if (which == 0) rtrl_step(p, h, x, RtrlTrace::zeros(p));
    if (which == 1) rflo_step(p, h, x, RfloTrace::zeros(p));
    if (which == 2) {
      LruParams l = random_lru(n, in, rng);
      lru_rtrl_step(l, CVector::Zero(n), x, LruTrace::zeros(l));
    }
    return static_cast<double>(trace_op_count());
  };
  const Index in = 3;
  for (Index n : {8, 16}) {
    const double z = static_cast<double>(in + n + 1);
    const double nn = static_cast<double>(n);
    EXPECT_EQ(ops(n, in, 1), nn * z + nn);                          // N Z
    EXPECT_EQ(ops(n, in, 2), nn * in + nn);                         // N I
    EXPECT_EQ(ops(n, in, 0), nn * nn * nn * z + nn * nn * nn + nn * z + nn);  // N^3 Z propagation
  }
  // doubling N: RFLO roughly doubles, RTRL grows by the cube of the trace propagation
  EXPECT_LT(ops(16, in, 1) / ops(8, in, 1), 4.0);
  EXPECT_GT(ops(16, in, 0) / ops(8, in, 0), 8.0);
}
