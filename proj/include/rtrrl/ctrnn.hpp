#pragma once

#include "rtrrl/rng.hpp"
#include "rtrrl/types.hpp"

namespace rtrrl {

// Leaky-integrator continuous-time RNN, integrated with forward Euler:
//   h <- h + dt / tau * (-h + tanh(W [x; h; 1]))
// repeated k = 1 / dt times per environment step.
struct CtRnnParams {
  Matrix W;    // N x (I + N + 1); last column is the bias
  Vector tau;  // N, every entry >= 1
  double dt = 1.0;
  int k = 1;

  Index hidden_size() const { return W.rows(); }
  Index input_size() const { return W.cols() - W.rows() - 1; }
  Index xi_size() const { return W.cols(); }

  auto recurrent_block() const { return W.middleCols(input_size(), hidden_size()); }

  /// Throws ConfigError when shapes, tau or (dt, k) are inconsistent.
  void validate() const;
};

/// Quantities of one Euler substep that the gradient engines consume.
struct StepTrace {
  Vector xi;         // [x; h; 1]
  Vector preact;     // W xi
  Vector act;        // tanh(W xi)
  Vector act_deriv;  // 1 - tanh^2(W xi)
};

struct CtRnnStep {
  Vector h;
  StepTrace trace;  // of the final substep
};

/// One Euler substep of size params.dt.
CtRnnStep ctrnn_substep(const CtRnnParams& params, const Vector& h, const Vector& x);

/// A full environment step (k substeps).
CtRnnStep ctrnn_step(const CtRnnParams& params, const Vector& h, const Vector& x);

/// Checks dimensions of (h, x) against params; throws ConfigError.
void check_ctrnn_inputs(const CtRnnParams& params, const Vector& h, const Vector& x);

/// tau = 1 + softplus(rho) keeps tau >= 1 under unconstrained updates.
Vector tau_from_rho(const Vector& rho);
Vector rho_from_tau(const Vector& tau);
/// d tau / d rho = sigmoid(rho).
Vector dtau_drho(const Vector& rho);

/// W ~ U(-1/sqrt(Z), 1/sqrt(Z)) with a zero bias column, tau ~ U(tau_min, tau_max).
CtRnnParams init_ctrnn(Index hidden, Index inputs, Rng& rng, double tau_min = 1.0,
                       double tau_max = 1.0, double dt = 1.0);

}  // namespace rtrrl
