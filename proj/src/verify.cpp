#include "rtrrl/verify.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "rtrrl/actor_critic.hpp"
#include "rtrrl/ctrnn.hpp"
#include "rtrrl/lru.hpp"
#include "rtrrl/online_grad.hpp"
#include "rtrrl/optimizer.hpp"
#include "rtrrl/oracles.hpp"
#include "rtrrl/rng.hpp"

namespace rtrrl {

namespace {

namespace orc = oracles;

struct CtInstance {
  CtRnnParams p;
  Vector h0;
  std::vector<Vector> xs;
  Vector c;  // loss L = c . h_T
};

struct Shape {
  Index n, in;
  int T;
  double dt;
};

std::vector<Shape> ct_shapes(bool quick) {
  std::vector<Shape> shapes;
  if (quick) {
    const int Ts[] = {1, 5, 8};
    for (int i = 0; i < 6; ++i) shapes.push_back({2 + i % 2, 1 + (i / 2) % 2, Ts[i % 3], i == 5 ? 0.5 : 1.0});
    return shapes;
  }
  const int Ts[] = {1, 5, 12};
  for (int i = 0; i < 20; ++i) {
    shapes.push_back({2 + i % 3, 1 + (i / 3) % 2, Ts[(i / 2) % 3], i % 5 == 4 ? 0.5 : 1.0});
  }
  return shapes;
}

Vector normal_vector(Index n, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

CtInstance make_ct_instance(const Shape& s, Rng& rng, bool zero_recurrent = false) {
  CtInstance inst;
  const Index z = s.in + s.n + 1;
  inst.p.W = Eigen::Map<Matrix>(normal_vector(s.n * z, rng, 1.2 / std::sqrt(double(z))).data(), s.n, z);
  if (zero_recurrent) inst.p.W.middleCols(s.in, s.n).setZero();
  std::uniform_real_distribution<double> tau(1.0, 3.0);
  inst.p.tau.resize(s.n);
  for (Index i = 0; i < s.n; ++i) inst.p.tau(i) = tau(rng);
  inst.p.dt = s.dt;
  inst.p.k = static_cast<int>(std::lround(1.0 / s.dt));
  inst.h0 = normal_vector(s.n, rng, 0.5);
  for (int t = 0; t < s.T; ++t) inst.xs.push_back(normal_vector(s.in, rng));
  inst.c = normal_vector(s.n, rng);
  return inst;
}

orc::CtRnnReference reference(const CtRnnParams& p) { return {p.W, p.tau, p.dt, p.k}; }

Vector flatten(const Matrix& W, const Vector& tau) {
  Vector v(W.size() + tau.size());
  v << Eigen::Map<const Vector>(W.data(), W.size()), tau;
  return v;
}

Vector engine_rtrl_grad(const CtInstance& inst) {
  Vector h = inst.h0;
  RtrlTrace J = RtrlTrace::zeros(inst.p);
  for (const Vector& x : inst.xs) {
    auto r = rtrl_step(inst.p, h, x, J);
    h = std::move(r.h);
    J = std::move(r.J);
  }
  const CtRnnGrad g = apply_feedback(J, inst.c);
  return flatten(g.W, g.tau);
}

Vector unrolled_ct_grad(const CtInstance& inst) {
  const auto g = orc::unrolled_grad(reference(inst.p), inst.h0, inst.xs, inst.c);
  return flatten(g.W, g.tau);
}

Vector fd_ct_grad(const CtInstance& inst) {
  const Index n = inst.p.hidden_size();
  const Index z = inst.p.xi_size();
  auto rollout = [&](const Vector& theta) {
    orc::CtRnnReference net = reference(inst.p);
    net.W = Eigen::Map<const Matrix>(theta.data(), n, z);
    net.tau = theta.tail(n);
    return Vector(orc::ctrnn_rollout(net, inst.h0, inst.xs));
  };
  const Matrix jac = orc::fd_jacobian(rollout, flatten(inst.p.W, inst.p.tau));
  return jac.transpose() * inst.c;
}

void maybe_inject(const VerifyOptions& opts, const char* name, Vector& g) {
  if (opts.inject == name) g(0) += 1e-3 * (g.cwiseAbs().maxCoeff() + 1.0);
}
void maybe_inject(const VerifyOptions& opts, const char* name, CVector& g) {
  if (opts.inject == name) g(0) += 1e-3 * (g.cwiseAbs().maxCoeff() + 1.0);
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

PropertyResult finish(const char* name, double worst, double tol, int instances) {
  PropertyResult r{name, worst <= tol, worst, tol, ""};
  r.detail = std::to_string(instances) + " instances, worst relative error " +
             fmt("%.3e (tolerance %.0e)", worst, tol);
  return r;
}

// ---- LRU instances

struct LruInstance {
  LruParams p;
  CVector h0;
  std::vector<Vector> xs;
  CVector c;  // L = Re(c^H h_T), so dL/dRe h + i dL/dIm h = c
};

CVector complex_normal(Index n, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0 / std::sqrt(2.0));
  CVector v(n);
  for (Index i = 0; i < n; ++i) v(i) = Complex(d(rng), d(rng));
  return v;
}

LruInstance make_lru_instance(const Shape& s, Rng& rng) {
  LruInstance inst;
  std::uniform_real_distribution<double> radius(0.5, 0.99);
  std::uniform_real_distribution<double> phase(-3.0, 3.0);
  inst.p.lambda.resize(s.n);
  for (Index i = 0; i < s.n; ++i) inst.p.lambda(i) = std::polar(radius(rng), phase(rng));
  inst.p.B_in = Eigen::Map<CMatrix>(complex_normal(s.n * s.in, rng).data(), s.n, s.in);
  inst.p.C_out = CMatrix::Identity(s.n, s.n);
  inst.p.D_skip = Matrix::Zero(s.n, s.in);
  inst.h0 = complex_normal(s.n, rng);
  for (int t = 0; t < s.T; ++t) inst.xs.push_back(normal_vector(s.in, rng));
  inst.c = complex_normal(s.n, rng);
  return inst;
}

CVector flatten(const CVector& lambda, const CMatrix& B) {
  CVector v(lambda.size() + B.size());
  v << lambda, Eigen::Map<const CVector>(B.data(), B.size());
  return v;
}

CVector engine_lru_grad(const LruInstance& inst) {
  CVector h = inst.h0;
  LruTrace J = LruTrace::zeros(inst.p);
  for (const Vector& x : inst.xs) {
    auto r = lru_rtrl_step(inst.p, h, x, J);
    h = std::move(r.h);
    J = std::move(r.J);
  }
  const LruGrad g = apply_feedback(J, inst.c);
  return flatten(g.lambda, g.B);
}

CVector fd_lru_grad(const LruInstance& inst) {
  const Index n = inst.p.hidden_size();
  const Index in = inst.p.input_size();
  auto rollout = [&](const CVector& theta) {
    const CVector lambda = theta.head(n);
    const CMatrix B = Eigen::Map<const CMatrix>(theta.data() + n, n, in);
    return CVector(orc::lru_rollout(lambda, B, inst.h0, inst.xs));
  };
  const auto jac = orc::fd_jacobian(rollout, flatten(inst.p.lambda, inst.p.B_in));
  CVector g(jac.d_re.cols());
  for (Index j = 0; j < g.size(); ++j) {
    g(j) = Complex(inst.c.dot(jac.d_re.col(j)).real(), inst.c.dot(jac.d_im.col(j)).real());
  }
  return g;
}

}  // namespace

PropertyResult check_rtrl_vs_fd(const VerifyOptions& opts) {
  Rng rng = make_rng(opts.seed, "verify.rtrl");
  double worst = 0.0;
  const auto shapes = ct_shapes(opts.quick);
  for (const auto& s : shapes) {
    const CtInstance inst = make_ct_instance(s, rng);
    Vector g = engine_rtrl_grad(inst);
    maybe_inject(opts, "rtrl_vs_fd", g);
    worst = std::max(worst, orc::relative_error(g, fd_ct_grad(inst)));
  }
  return finish("rtrl_vs_fd", worst, 1e-4, static_cast<int>(shapes.size()));
}

PropertyResult check_rtrl_vs_unrolled(const VerifyOptions& opts) {
  Rng rng = make_rng(opts.seed, "verify.rtrl");
  double worst = 0.0;
  const auto shapes = ct_shapes(opts.quick);
  for (const auto& s : shapes) {
    const CtInstance inst = make_ct_instance(s, rng);
    Vector g = engine_rtrl_grad(inst);
    maybe_inject(opts, "rtrl_vs_unrolled", g);
    worst = std::max(worst, orc::relative_error(g, unrolled_ct_grad(inst)));
  }
  return finish("rtrl_vs_unrolled", worst, 1e-6, static_cast<int>(shapes.size()));
}

PropertyResult check_oracle_cross(const VerifyOptions& opts) {
  Rng rng = make_rng(opts.seed, "verify.cross");
  double worst = 0.0;
  const auto shapes = ct_shapes(opts.quick);
  for (const auto& s : shapes) {
    const CtInstance inst = make_ct_instance(s, rng);
    Vector g = unrolled_ct_grad(inst);
    maybe_inject(opts, "oracle_cross", g);
    worst = std::max(worst, orc::relative_error(g, fd_ct_grad(inst)));
  }
  return finish("oracle_cross", worst, 1e-5, static_cast<int>(shapes.size()));
}

PropertyResult check_lru_vs_fd(const VerifyOptions& opts) {
  Rng rng = make_rng(opts.seed, "verify.lru");
  double worst = 0.0;
  const auto shapes = ct_shapes(opts.quick);
  for (const auto& s : shapes) {
    const LruInstance inst = make_lru_instance(s, rng);
    CVector g = engine_lru_grad(inst);
    maybe_inject(opts, "lru_vs_fd", g);
    worst = std::max(worst, orc::relative_error(g, fd_lru_grad(inst)));
  }
  return finish("lru_vs_fd", worst, 1e-5, static_cast<int>(shapes.size()));
}

PropertyResult check_lru_vs_unrolled(const VerifyOptions& opts) {
  Rng rng = make_rng(opts.seed, "verify.lru");
  double worst = 0.0;
  const auto shapes = ct_shapes(opts.quick);
  for (const auto& s : shapes) {
    const LruInstance inst = make_lru_instance(s, rng);
    CVector g = engine_lru_grad(inst);
    maybe_inject(opts, "lru_vs_unrolled", g);
    const auto ref = orc::lru_unrolled_grad(inst.p.lambda, inst.p.B_in, inst.h0, inst.xs, inst.c);
    worst = std::max(worst, orc::relative_error(g, flatten(ref.lambda, ref.B)));
  }
  return finish("lru_vs_unrolled", worst, 1e-5, static_cast<int>(shapes.size()));
}

PropertyResult check_lru_closed_form(const VerifyOptions& opts) {
  Rng rng = make_rng(opts.seed, "verify.lru_closed");
  double worst = 0.0;
  const auto shapes = ct_shapes(opts.quick);
  for (const auto& s : shapes) {
    const LruInstance inst = make_lru_instance(s, rng);
    CVector h = CVector::Zero(s.n);
    for (const Vector& x : inst.xs) h = lru_step(inst.p, h, x);
    maybe_inject(opts, "lru_closed_form", h);
    worst = std::max(worst, orc::relative_error(h, orc::lru_closed_form(inst.p.lambda, inst.p.B_in, inst.xs)));
  }
  return finish("lru_closed_form", worst, 1e-10, static_cast<int>(shapes.size()));
}

PropertyResult check_rflo_structure(const VerifyOptions& opts) {
  Rng rng = make_rng(opts.seed, "verify.rflo");
  double worst = 0.0;
  const int runs = opts.quick ? 2 : 4;
  for (int run = 0; run < runs; ++run) {
    const Shape s{opts.quick ? 3 : 4, 2, 50, run % 2 == 1 ? 0.5 : 1.0};
    const CtInstance inst = make_ct_instance(s, rng, true);
    const Index n = s.n;
    const Index z = inst.p.xi_size();
    Vector h_rtrl = inst.h0, h_rflo = inst.h0;
    RtrlTrace Jr = RtrlTrace::zeros(inst.p);
    RfloTrace Jf = RfloTrace::zeros(inst.p);
    for (const Vector& x : inst.xs) {
      auto a = rtrl_step(inst.p, h_rtrl, x, Jr);
      auto b = rflo_step(inst.p, h_rflo, x, Jf);
      h_rtrl = a.h;
      h_rflo = b.h;
      Jr = a.J;
      Jf = b.J;
      // RTRL row i restricted to W(i, :), and its off-row entries, which must vanish
      Matrix diag_part(n, z);
      double off = 0.0;
      for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < z; ++k) {
          for (Index j = 0; j < n; ++j) {
            const double v = Jr.W(i, j + k * n);
            if (j == i) diag_part(i, k) = v;
            else off = std::max(off, std::abs(v));
          }
        }
      }
      Matrix rflo_w = Jf.W;
      if (opts.inject == "rflo_structure") rflo_w(0, 0) += 1e-6;
      worst = std::max({worst, orc::relative_error(diag_part, rflo_w), off,
                        orc::relative_error(Matrix(Jr.tau.diagonal()), Matrix(Jf.tau))});
    }
  }
  return finish("rflo_structure", worst, 1e-12, runs);
}

PropertyResult check_rflo_tau_trace(const VerifyOptions& opts) {
  Rng rng = make_rng(opts.seed, "verify.rflo_tau");
  double worst = 0.0;
  const int runs = opts.quick ? 2 : 4;
  for (int run = 0; run < runs; ++run) {
    const Shape s{opts.quick ? 3 : 4, 2, 50, run % 2 == 1 ? 0.5 : 1.0};
    const CtInstance inst = make_ct_instance(s, rng);
    Vector h = inst.h0;
    RfloTrace J = RfloTrace::zeros(inst.p);
    std::vector<Vector> seen;
    for (const Vector& x : inst.xs) {
      auto r = rflo_step(inst.p, h, x, J);
      h = r.h;
      J = r.J;
      seen.push_back(x);
      Vector got = J.tau;
      maybe_inject(opts, "rflo_tau_trace", got);
      worst = std::max(worst, orc::relative_error(got, orc::local_tau_trace(reference(inst.p), inst.h0, seen)));
    }
  }
  return finish("rflo_tau_trace", worst, 1e-12, runs);
}

void ring_mrp(Matrix& P, Vector& rewards) {
  const Index n = 5;
  P = Matrix::Zero(n, n);
  rewards.resize(n);
  for (Index s = 0; s < n; ++s) {
    P(s, s) = 0.1;
    P(s, (s + 1) % n) = 0.9;
    rewards(s) = static_cast<double>(s) / 4.0;
  }
}

TdRun run_td_critic(const Matrix& P, const Vector& rewards, double gamma, double lambda,
                    double alpha, std::int64_t steps, std::uint64_t seed) {
  const Index n = P.rows();
  Rng rng = make_rng(seed, "env");
  std::vector<std::discrete_distribution<Index>> next;
  for (Index s = 0; s < n; ++s) {
    const Vector row = P.row(s).transpose();
    next.emplace_back(row.data(), row.data() + n);
  }
  // One-hot features: the critic weight vector is the value table.
  Vector w = Vector::Zero(n);
  Vector e = Vector::Zero(n);
  Vector avg = Vector::Zero(n);
  BlockOptimizer sgd({OptimizerKind::sgd}, n);
  const std::int64_t half = steps / 2;
  Index s = 0;
  for (std::int64_t t = 0; t < steps; ++t) {
    Vector feat = Vector::Zero(n);
    feat(s) = 1.0;
    const Index s_next = next[static_cast<std::size_t>(s)](rng);
    const double delta = td_error(rewards(s), gamma, w.dot(feat), w(s_next), false);
    e = gamma * lambda * e + feat;
    sgd.step(w, -delta * e, alpha);
    if (t >= half) avg += w;
    s = s_next;
  }
  return {w, avg / static_cast<double>(steps - half)};
}

PropertyResult check_td_convergence(const VerifyOptions& opts, double lambda) {
  Matrix P;
  Vector r;
  ring_mrp(P, r);
  const double gamma = 0.9;
  const Vector v = orc::mrp_value_solver(P, r, gamma);
  TdRun run = run_td_critic(P, r, gamma, lambda, 1e-2, 200'000, opts.seed);

  PropertyResult res;
  res.name = lambda == 0.0 ? "td_convergence_lambda0" : "td_convergence_lambda0.9";
  if (opts.inject == res.name) run.averaged_weights(0) += 0.05;
  const double avg_err = (run.averaged_weights - v).cwiseAbs().maxCoeff();
  const double last_err = (run.final_weights - v).cwiseAbs().maxCoeff();
  res.tolerance = 1e-2;
  res.measured = avg_err;
  res.passed = avg_err <= res.tolerance;
  res.detail = "2e5 steps, L-inf error of the averaged iterate " +
               fmt("%.3e, of the last iterate %.3e", avg_err, last_err);
  return res;
}

std::vector<std::string> property_names() {
  return {"rtrl_vs_fd",      "rtrl_vs_unrolled", "oracle_cross",   "lru_vs_fd",
          "lru_vs_unrolled", "lru_closed_form",  "rflo_structure", "rflo_tau_trace",
          "td_convergence_lambda0", "td_convergence_lambda0.9"};
}

std::vector<PropertyResult> run_verification(const VerifyOptions& opts) {
  return {check_rtrl_vs_fd(opts),       check_rtrl_vs_unrolled(opts),   check_oracle_cross(opts),
          check_lru_vs_fd(opts),        check_lru_vs_unrolled(opts),    check_lru_closed_form(opts),
          check_rflo_structure(opts),   check_rflo_tau_trace(opts),     check_td_convergence(opts, 0.0),
          check_td_convergence(opts, 0.9)};
}

}  // namespace rtrrl
