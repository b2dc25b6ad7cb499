#include "rtrrl/online_grad.hpp"

namespace rtrrl {

namespace {

thread_local std::uint64_t g_trace_ops = 0;

void count_ops(Index n) { g_trace_ops += static_cast<std::uint64_t>(n); }

void check_trace(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

std::uint64_t trace_op_count() { return g_trace_ops; }
void reset_trace_op_count() { g_trace_ops = 0; }

RtrlTrace RtrlTrace::zeros(const CtRnnParams& params) {
  const Index n = params.hidden_size();
  return {Matrix::Zero(n, n * params.xi_size()), Matrix::Zero(n, n)};
}

RfloTrace RfloTrace::zeros(const CtRnnParams& params) {
  const Index n = params.hidden_size();
  return {Matrix::Zero(n, params.xi_size()), Vector::Zero(n)};
}

LruTrace LruTrace::zeros(const LruParams& params) {
  return {CVector::Zero(params.hidden_size()),
          CMatrix::Zero(params.hidden_size(), params.input_size())};
}

RtrlStepResult rtrl_step(const CtRnnParams& params, const Vector& h, const Vector& x,
                         const RtrlTrace& J) {
  check_ctrnn_inputs(params, h, x);
  const Index n = params.hidden_size();
  const Index z = params.xi_size();
  check_trace(J.W.rows() == n && J.W.cols() == n * z && J.tau.rows() == n && J.tau.cols() == n,
              "rtrl: trace shape does not match parameters");

  RtrlStepResult out{h, J};
  Matrix propagate(n, n);
  for (int s = 0; s < params.k; ++s) {
    const CtRnnStep step = ctrnn_substep(params, out.h, x);
    const StepTrace& tr = step.trace;
    const Vector leak = params.dt * params.tau.cwiseInverse();

    // I + dt * df/dh, with df_i/dh_m = (-delta_im + phi'_i W_rec(i, m)) / tau_i
    propagate.noalias() = (leak.cwiseProduct(tr.act_deriv)).asDiagonal() * params.recurrent_block();
    propagate.diagonal().array() += 1.0 - leak.array();

    Matrix next_w(n, n * z);
    next_w.noalias() = propagate * out.J.W;
    Matrix next_tau(n, n);
    next_tau.noalias() = propagate * out.J.tau;
    count_ops(n * n * n * z + n * n * n);

    // immediate partials: df_i/dW(i, k) = phi'_i xi_k / tau_i,
    // df_i/dtau_i = (h_i - phi_i) / tau_i^2
    for (Index i = 0; i < n; ++i) {
      const double g = leak(i) * tr.act_deriv(i);
      for (Index k = 0; k < z; ++k) next_w(i, i + k * n) += g * tr.xi(k);
      next_tau(i, i) += leak(i) / params.tau(i) * (out.h(i) - tr.act(i));
    }
    count_ops(n * z + n);

    out.h = step.h;
    out.J.W = std::move(next_w);
    out.J.tau = std::move(next_tau);
  }
  if (!out.h.allFinite()) throw NumericFault("rtrl: non-finite hidden state");
  if (!out.J.W.allFinite() || !out.J.tau.allFinite()) {
    throw NumericFault("rtrl: non-finite Jacobian trace");
  }
  return out;
}

RfloStepResult rflo_step(const CtRnnParams& params, const Vector& h, const Vector& x,
                         const RfloTrace& J) {
  check_ctrnn_inputs(params, h, x);
  const Index n = params.hidden_size();
  const Index z = params.xi_size();
  check_trace(J.W.rows() == n && J.W.cols() == z && J.tau.size() == n,
              "rflo: trace shape does not match parameters");

  RfloStepResult out{h, J};
  for (int s = 0; s < params.k; ++s) {
    const CtRnnStep step = ctrnn_substep(params, out.h, x);
    const StepTrace& tr = step.trace;
    const Vector leak = params.dt * params.tau.cwiseInverse();
    const Vector keep = (1.0 - leak.array()).matrix();

    out.J.W = keep.asDiagonal() * out.J.W;
    out.J.W.noalias() += leak.cwiseProduct(tr.act_deriv) * tr.xi.transpose();
    out.J.tau = keep.cwiseProduct(out.J.tau) +
                leak.cwiseQuotient(params.tau).cwiseProduct(out.h - tr.act);
    count_ops(n * z + n);
    out.h = step.h;
  }
  if (!out.h.allFinite()) throw NumericFault("rflo: non-finite hidden state");
  if (!out.J.W.allFinite() || !out.J.tau.allFinite()) {
    throw NumericFault("rflo: non-finite Jacobian trace");
  }
  return out;
}

LruStepResult lru_rtrl_step(const LruParams& params, const CVector& h, const Vector& x,
                            const LruTrace& J) {
  const Index n = params.hidden_size();
  const Index in = params.input_size();
  check_trace(J.lambda.size() == n && J.B.rows() == n && J.B.cols() == in,
              "lru: trace shape does not match parameters");
  LruStepResult out{lru_step(params, h, x), LruTrace{}};
  out.J.lambda = params.lambda.cwiseProduct(J.lambda) + h;
  out.J.B = params.lambda.asDiagonal() * J.B;
  out.J.B.rowwise() += x.transpose().cast<Complex>();
  count_ops(n * in + n);
  if (!out.J.lambda.allFinite() || !out.J.B.allFinite()) {
    throw NumericFault("lru: non-finite Jacobian trace");
  }
  return out;
}

CtRnnGrad apply_feedback(const RtrlTrace& J, const Vector& eps) {
  const Index n = J.tau.rows();
  check_trace(eps.size() == n, "rtrl: feedback size mismatch");
  const Index z = J.W.cols() / n;
  CtRnnGrad g;
  const Vector flat = J.W.transpose() * eps;
  g.W = Eigen::Map<const Matrix>(flat.data(), n, z);
  g.tau = J.tau.transpose() * eps;
  return g;
}

CtRnnGrad apply_feedback(const RfloTrace& J, const Vector& eps) {
  check_trace(eps.size() == J.W.rows(), "rflo: feedback size mismatch");
  return {eps.asDiagonal() * J.W, eps.cwiseProduct(J.tau)};
}

LruGrad apply_feedback(const LruTrace& J, const CVector& eps_h) {
  check_trace(eps_h.size() == J.lambda.size(), "lru: feedback size mismatch");
  // L real, h holomorphic in (lambda, B): dL/dRe p + i dL/dIm p = conj(dh/dp) * eps
  LruGrad g;
  g.lambda = J.lambda.conjugate().cwiseProduct(eps_h);
  g.B = eps_h.asDiagonal() * J.B.conjugate();
  return g;
}

}  // namespace rtrrl
