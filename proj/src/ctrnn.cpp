#include "rtrrl/ctrnn.hpp"

#include <cmath>
#include <random>

namespace rtrrl {

void CtRnnParams::validate() const {
  const Index n = W.rows();
  if (n < 1 || W.cols() < n + 1) {
    throw ConfigError("ctrnn: W must be N x (I + N + 1), got " + std::to_string(W.rows()) + " x " +
                      std::to_string(W.cols()));
  }
  if (tau.size() != n) {
    throw ConfigError("ctrnn: tau has " + std::to_string(tau.size()) + " entries, expected " +
                      std::to_string(n));
  }
  if ((tau.array() < 1.0).any() || !tau.allFinite()) {
    throw ConfigError("ctrnn: every time constant must be finite and >= 1");
  }
  if (k < 1 || !(dt > 0.0 && dt <= 1.0) || std::abs(dt * k - 1.0) > 1e-12) {
    throw ConfigError("ctrnn: need dt in (0, 1] and dt * k = 1");
  }
}

void check_ctrnn_inputs(const CtRnnParams& params, const Vector& h, const Vector& x) {
  if (h.size() != params.hidden_size() || x.size() != params.input_size()) {
    throw ConfigError("ctrnn: state/input size mismatch (h " + std::to_string(h.size()) + ", x " +
                      std::to_string(x.size()) + ")");
  }
}

CtRnnStep ctrnn_substep(const CtRnnParams& params, const Vector& h, const Vector& x) {
  const Index n = params.hidden_size();
  const Index in = params.input_size();
  CtRnnStep out;
  StepTrace& tr = out.trace;
  tr.xi.resize(params.xi_size());
  tr.xi.head(in) = x;
  tr.xi.segment(in, n) = h;
  tr.xi(in + n) = 1.0;
  tr.preact.noalias() = params.W * tr.xi;
  tr.act = tr.preact.array().tanh();
  tr.act_deriv = 1.0 - tr.act.array().square();
  // written as a convex combination so that dt / tau = 1 gives tanh(W xi) exactly
  const Eigen::ArrayXd leak = params.dt / params.tau.array();
  out.h = ((1.0 - leak) * h.array() + leak * tr.act.array()).matrix();
  return out;
}

CtRnnStep ctrnn_step(const CtRnnParams& params, const Vector& h, const Vector& x) {
  check_ctrnn_inputs(params, h, x);
  CtRnnStep out = ctrnn_substep(params, h, x);
  for (int s = 1; s < params.k; ++s) {
    out = ctrnn_substep(params, out.h, x);
  }
  if (!out.h.allFinite()) {
    throw NumericFault("ctrnn: non-finite hidden state");
  }
  return out;
}

Vector tau_from_rho(const Vector& rho) {
  // log1p(exp(r)) without overflow for large r
  return rho.unaryExpr([](double r) {
    return 1.0 + (r > 30.0 ? r : std::log1p(std::exp(r)));
  });
}

Vector rho_from_tau(const Vector& tau) {
  return tau.unaryExpr([](double t) {
    const double s = t - 1.0;
    if (s <= 0.0) {
      throw ConfigError("ctrnn: tau must be > 1 to be represented as 1 + softplus(rho)");
    }
    return s > 30.0 ? s : std::log(std::expm1(s));
  });
}

Vector dtau_drho(const Vector& rho) {
  return rho.unaryExpr([](double r) { return 1.0 / (1.0 + std::exp(-r)); });
}

CtRnnParams init_ctrnn(Index hidden, Index inputs, Rng& rng, double tau_min, double tau_max,
                       double dt) {
  CtRnnParams p;
  const Index z = inputs + hidden + 1;
  const double bound = 1.0 / std::sqrt(static_cast<double>(z));
  std::uniform_real_distribution<double> w(-bound, bound);
  p.W = Matrix::Zero(hidden, z);
  for (Index c = 0; c + 1 < z; ++c) {
    for (Index r = 0; r < hidden; ++r) p.W(r, c) = w(rng);
  }
  std::uniform_real_distribution<double> t(tau_min, tau_max);
  p.tau.resize(hidden);
  for (Index i = 0; i < hidden; ++i) p.tau(i) = tau_min == tau_max ? tau_min : t(rng);
  p.dt = dt;
  p.k = static_cast<int>(std::lround(1.0 / dt));
  p.validate();
  return p;
}

}  // namespace rtrrl
