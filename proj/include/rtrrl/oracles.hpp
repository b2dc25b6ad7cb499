#pragma once

// Reference computations for tests and the verify command. Nothing here
// includes or links the engines it is used to check: every recurrence is
// re-derived with explicit scalar loops.

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace rtrrl::oracles {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

struct FiniteDiffSpec {
  double perturbation = 1e-5;  // central scheme
  double tolerance = 1e-4;     // relative
};

/// ||a - b||_inf / max(||a||_inf, ||b||_inf, 1e-8)
double relative_error(const MatrixXd& a, const MatrixXd& b);
double relative_error(const MatrixXcd& a, const MatrixXcd& b);
double relative_error(const VectorXd& a, const VectorXd& b);
double relative_error(const VectorXcd& a, const VectorXcd& b);

/// Central-difference Jacobian, one column per scalar parameter.
MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& rollout,
                     const VectorXd& params, const FiniteDiffSpec& spec = {});

/// Complex parameters are perturbed on the real and imaginary axes separately.
struct ComplexJacobian {
  MatrixXcd d_re;  // d out / d Re p
  MatrixXcd d_im;  // d out / d Im p
};
ComplexJacobian fd_jacobian(const std::function<VectorXcd(const VectorXcd&)>& rollout,
                            const VectorXcd& params, const FiniteDiffSpec& spec = {});

// CT-RNN written out element by element.
struct CtRnnReference {
  MatrixXd W;  // N x (I + N + 1)
  VectorXd tau;
  double dt = 1.0;
  int k = 1;
};

VectorXd ctrnn_rollout(const CtRnnReference& net, const VectorXd& h0,
                       const std::vector<VectorXd>& inputs);

struct CtRnnGradients {
  MatrixXd W;
  VectorXd tau;
};

/// Gradient of L(h_T) given dL/dh_T, by reverse accumulation over a stored
/// rollout. Parameters are held fixed over the sequence.
CtRnnGradients unrolled_grad(const CtRnnReference& net, const VectorXd& h0,
                             const std::vector<VectorXd>& inputs, const VectorXd& dloss_dh);

/// Scalar recurrence for the local tau sensitivity of every neuron,
///   s_i <- s_i (1 - dt/tau_i) + dt/tau_i^2 (h_i - tanh(W xi)_i)
/// evaluated along the rollout. Returns the value after the last step.
VectorXd local_tau_trace(const CtRnnReference& net, const VectorXd& h0,
                         const std::vector<VectorXd>& inputs);

// Diagonal linear recurrence h' = lambda .* h + B x.
VectorXcd lru_rollout(const VectorXcd& lambda, const MatrixXcd& B, const VectorXcd& h0,
                      const std::vector<VectorXd>& inputs);

/// h_T = sum_t lambda^(T-1-t) B x_t from a zero initial state.
VectorXcd lru_closed_form(const VectorXcd& lambda, const MatrixXcd& B,
                          const std::vector<VectorXd>& inputs);

struct LruGradients {
  VectorXcd lambda;  // dL/dRe + i dL/dIm
  MatrixXcd B;
};

/// Reverse accumulation for a real loss with eps = dL/dRe h_T + i dL/dIm h_T.
LruGradients lru_unrolled_grad(const VectorXcd& lambda, const MatrixXcd& B, const VectorXcd& h0,
                               const std::vector<VectorXd>& inputs, const VectorXcd& eps);

/// Solves v = r + gamma P v directly. Throws std::invalid_argument when the
/// system is singular or gamma is outside [0, 1).
VectorXd mrp_value_solver(const MatrixXd& P, const VectorXd& rbar, double gamma);

/// Adam on a single scalar with bias-corrected moments.
struct ScalarAdam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double m = 0.0;
  double v = 0.0;
  long t = 0;

  /// Returns the parameter after one descent step on grad.
  double step(double param, double grad);
};

}  // namespace rtrrl::oracles
