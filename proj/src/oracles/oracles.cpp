#include "rtrrl/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/LU>

namespace rtrrl::oracles {

double relative_error(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("relative_error: shape mismatch");
  }
  const double diff = a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
  const double na = a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
  const double nb = b.size() == 0 ? 0.0 : b.cwiseAbs().maxCoeff();
  return diff / std::max({na, nb, 1e-8});
}

double relative_error(const MatrixXcd& a, const MatrixXcd& b) {
  MatrixXd ra(a.rows(), 2 * a.cols());
  MatrixXd rb(b.rows(), 2 * b.cols());
  ra << a.real(), a.imag();
  rb << b.real(), b.imag();
  return relative_error(ra, rb);
}

double relative_error(const VectorXd& a, const VectorXd& b) {
  return relative_error(MatrixXd(a), MatrixXd(b));
}

double relative_error(const VectorXcd& a, const VectorXcd& b) {
  return relative_error(MatrixXcd(a), MatrixXcd(b));
}

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& rollout,
                     const VectorXd& params, const FiniteDiffSpec& spec) {
  if (!(spec.perturbation > 0.0)) throw std::invalid_argument("fd_jacobian: perturbation <= 0");
  const VectorXd base = rollout(params);
  MatrixXd jac(base.size(), params.size());
  VectorXd p = params;
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    p(j) = params(j) + spec.perturbation;
    const VectorXd plus = rollout(p);
    p(j) = params(j) - spec.perturbation;
    const VectorXd minus = rollout(p);
    p(j) = params(j);
    jac.col(j) = (plus - minus) / (2.0 * spec.perturbation);
  }
  return jac;
}

ComplexJacobian fd_jacobian(const std::function<VectorXcd(const VectorXcd&)>& rollout,
                            const VectorXcd& params, const FiniteDiffSpec& spec) {
  if (!(spec.perturbation > 0.0)) throw std::invalid_argument("fd_jacobian: perturbation <= 0");
  const VectorXcd base = rollout(params);
  ComplexJacobian jac{MatrixXcd(base.size(), params.size()), MatrixXcd(base.size(), params.size())};
  VectorXcd p = params;
  const std::complex<double> axes[2] = {{1.0, 0.0}, {0.0, 1.0}};
  for (int axis = 0; axis < 2; ++axis) {
    MatrixXcd& out = axis == 0 ? jac.d_re : jac.d_im;
    const std::complex<double> d = axes[axis] * spec.perturbation;
    for (Eigen::Index j = 0; j < params.size(); ++j) {
      p(j) = params(j) + d;
      const VectorXcd plus = rollout(p);
      p(j) = params(j) - d;
      const VectorXcd minus = rollout(p);
      p(j) = params(j);
      out.col(j) = (plus - minus) / (2.0 * spec.perturbation);
    }
  }
  return jac;
}

namespace {

struct Substep {
  VectorXd h;    // state entering the substep
  VectorXd xi;
  VectorXd act;  // tanh(W xi)
};

// One Euler substep, element by element. Records the quantities the
// backward pass needs.
VectorXd euler_substep(const CtRnnReference& net, const VectorXd& h, const VectorXd& x,
                       Substep* record) {
  const Eigen::Index n = net.W.rows();
  const Eigen::Index in = x.size();
  const Eigen::Index z = net.W.cols();
  VectorXd xi(z);
  for (Eigen::Index j = 0; j < in; ++j) xi(j) = x(j);
  for (Eigen::Index j = 0; j < n; ++j) xi(in + j) = h(j);
  xi(z - 1) = 1.0;
  VectorXd act(n);
  VectorXd next(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < z; ++j) s += net.W(i, j) * xi(j);
    act(i) = std::tanh(s);
    next(i) = h(i) + net.dt / net.tau(i) * (-h(i) + act(i));
  }
  if (record != nullptr) *record = {h, xi, act};
  return next;
}

}  // namespace

VectorXd ctrnn_rollout(const CtRnnReference& net, const VectorXd& h0,
                       const std::vector<VectorXd>& inputs) {
  VectorXd h = h0;
  for (const VectorXd& x : inputs) {
    for (int s = 0; s < net.k; ++s) h = euler_substep(net, h, x, nullptr);
  }
  return h;
}

CtRnnGradients unrolled_grad(const CtRnnReference& net, const VectorXd& h0,
                             const std::vector<VectorXd>& inputs, const VectorXd& dloss_dh) {
  const Eigen::Index n = net.W.rows();
  const Eigen::Index z = net.W.cols();
  std::vector<Substep> tape;
  tape.reserve(inputs.size() * static_cast<std::size_t>(net.k));
  VectorXd h = h0;
  for (const VectorXd& x : inputs) {
    for (int s = 0; s < net.k; ++s) {
      Substep rec;
      h = euler_substep(net, h, x, &rec);
      tape.push_back(std::move(rec));
    }
  }

  CtRnnGradients g{MatrixXd::Zero(n, z), VectorXd::Zero(n)};
  const Eigen::Index in = z - n - 1;
  VectorXd adj = dloss_dh;
  for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
    const Substep& s = *it;
    VectorXd prev(n);
    // through the leak term
    for (Eigen::Index m = 0; m < n; ++m) prev(m) = adj(m) * (1.0 - net.dt / net.tau(m));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double rate = net.dt / net.tau(i);
      const double upstream = adj(i) * rate * (1.0 - s.act(i) * s.act(i));
      for (Eigen::Index j = 0; j < z; ++j) g.W(i, j) += upstream * s.xi(j);
      for (Eigen::Index m = 0; m < n; ++m) prev(m) += upstream * net.W(i, in + m);
      g.tau(i) += adj(i) * rate / net.tau(i) * (s.h(i) - s.act(i));
    }
    adj = prev;
  }
  return g;
}

VectorXd local_tau_trace(const CtRnnReference& net, const VectorXd& h0,
                         const std::vector<VectorXd>& inputs) {
  const Eigen::Index n = net.W.rows();
  VectorXd trace = VectorXd::Zero(n);
  VectorXd h = h0;
  for (const VectorXd& x : inputs) {
    for (int s = 0; s < net.k; ++s) {
      Substep rec;
      const VectorXd next = euler_substep(net, h, x, &rec);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double rate = net.dt / net.tau(i);
        trace(i) = trace(i) * (1.0 - rate) + rate / net.tau(i) * (rec.h(i) - rec.act(i));
      }
      h = next;
    }
  }
  return trace;
}

VectorXcd lru_rollout(const VectorXcd& lambda, const MatrixXcd& B, const VectorXcd& h0,
                      const std::vector<VectorXd>& inputs) {
  VectorXcd h = h0;
  for (const VectorXd& x : inputs) {
    VectorXcd next(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      std::complex<double> s = lambda(i) * h(i);
      for (Eigen::Index j = 0; j < x.size(); ++j) s += B(i, j) * x(j);
      next(i) = s;
    }
    h = next;
  }
  return h;
}

VectorXcd lru_closed_form(const VectorXcd& lambda, const MatrixXcd& B,
                          const std::vector<VectorXd>& inputs) {
  const Eigen::Index n = lambda.size();
  const auto T = static_cast<long>(inputs.size());
  VectorXcd h = VectorXcd::Zero(n);
  for (long t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) {
      std::complex<double> bx = 0.0;
      for (Eigen::Index j = 0; j < inputs[t].size(); ++j) bx += B(i, j) * inputs[t](j);
      h(i) += std::pow(lambda(i), static_cast<double>(T - 1 - t)) * bx;
    }
  }
  return h;
}

LruGradients lru_unrolled_grad(const VectorXcd& lambda, const MatrixXcd& B, const VectorXcd& h0,
                               const std::vector<VectorXd>& inputs, const VectorXcd& eps) {
  const Eigen::Index n = lambda.size();
  std::vector<VectorXcd> states{h0};
  for (const VectorXd& x : inputs) {
    states.push_back(lru_rollout(lambda, B, states.back(), {x}));
  }
  LruGradients g{VectorXcd::Zero(n), MatrixXcd::Zero(n, B.cols())};
  VectorXcd adj = eps;
  for (auto t = static_cast<long>(inputs.size()) - 1; t >= 0; --t) {
    for (Eigen::Index i = 0; i < n; ++i) {
      g.lambda(i) += std::conj(states[t](i)) * adj(i);
      for (Eigen::Index j = 0; j < B.cols(); ++j) g.B(i, j) += adj(i) * inputs[t](j);
      adj(i) = std::conj(lambda(i)) * adj(i);
    }
  }
  return g;
}

VectorXd mrp_value_solver(const MatrixXd& P, const VectorXd& rbar, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("mrp_value_solver: gamma must lie in [0, 1)");
  }
  if (P.rows() != P.cols() || P.rows() != rbar.size()) {
    throw std::invalid_argument("mrp_value_solver: shape mismatch");
  }
  const MatrixXd A = MatrixXd::Identity(P.rows(), P.cols()) - gamma * P;
  Eigen::FullPivLU<MatrixXd> lu(A);
  if (!lu.isInvertible()) throw std::invalid_argument("mrp_value_solver: singular system");
  return lu.solve(rbar);
}

double ScalarAdam::step(double param, double grad) {
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad * grad;
  const double m_hat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
  const double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
  return param - lr * m_hat / (std::sqrt(v_hat) + eps);
}

}  // namespace rtrrl::oracles
