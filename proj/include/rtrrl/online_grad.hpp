#pragma once

#include <cstdint>

#include "rtrrl/ctrnn.hpp"
#include "rtrrl/lru.hpp"
#include "rtrrl/types.hpp"

namespace rtrrl {

// Forward-mode estimates of dh/dtheta carried alongside the hidden state.
//
// Exact RTRL keeps the full sensitivity of every neuron to every weight, so
// row i of W is d h_i / d vec(W) with vec() in Eigen's column-major order
// (column j + k * N holds d h_i / d W(j, k)).
struct RtrlTrace {
  Matrix W;    // N x (N * Z)
  Matrix tau;  // N x N, (i, j) = d h_i / d tau_j

  static RtrlTrace zeros(const CtRnnParams& params);
};

// RFLO keeps only the diagonal blocks: row i of W is d h_i / d W(i, :).
struct RfloTrace {
  Matrix W;    // N x Z
  Vector tau;  // N, d h_i / d tau_i

  static RfloTrace zeros(const CtRnnParams& params);
};

// Diagonal recurrence: each lambda_i and row B(i, :) only reach neuron i,
// so the per-neuron sensitivities are exact.
struct LruTrace {
  CVector lambda;  // N, d h_i / d lambda_i
  CMatrix B;       // N x I, d h_i / d B(i, j)

  static LruTrace zeros(const LruParams& params);
};

struct CtRnnGrad {
  Matrix W;
  Vector tau;
};

// Gradients of a real loss w.r.t. complex parameters, stored as
// dL/dRe + i dL/dIm.
struct LruGrad {
  CVector lambda;
  CMatrix B;
};

struct RtrlStepResult {
  Vector h;
  RtrlTrace J;
};

struct RfloStepResult {
  Vector h;
  RfloTrace J;
};

struct LruStepResult {
  CVector h;
  LruTrace J;
};

/// Exact RTRL: J' = J (I + dt * df/dh) + dt * df/dtheta, once per Euler substep.
RtrlStepResult rtrl_step(const CtRnnParams& params, const Vector& h, const Vector& x,
                         const RtrlTrace& J);

/// RFLO: the recursion above with the horizontal term J * d(phi)/dh dropped.
RfloStepResult rflo_step(const CtRnnParams& params, const Vector& h, const Vector& x,
                         const RfloTrace& J);

/// Diagonal RTRL for the LRU.
LruStepResult lru_rtrl_step(const LruParams& params, const CVector& h, const Vector& x,
                            const LruTrace& J);

/// Contract a trace against the error delivered at the hidden state.
CtRnnGrad apply_feedback(const RtrlTrace& J, const Vector& eps);
CtRnnGrad apply_feedback(const RfloTrace& J, const Vector& eps);
/// eps_h holds dL/dRe h + i dL/dIm h.
LruGrad apply_feedback(const LruTrace& J, const CVector& eps_h);

/// Multiply-adds spent in trace recursions on this thread since the last reset.
std::uint64_t trace_op_count();
void reset_trace_op_count();

}  // namespace rtrrl
