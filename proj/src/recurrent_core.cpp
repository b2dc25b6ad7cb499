#include "rtrrl/recurrent_core.hpp"

#include <cmath>
#include <utility>

namespace rtrrl {

CellType parse_cell_type(const std::string& s) {
  if (s == "ctrnn") return CellType::ctrnn;
  if (s == "lru") return CellType::lru;
  throw ConfigError("unknown cell type '" + s + "' (expected ctrnn or lru)");
}

GradMode parse_grad_mode(const std::string& s) {
  if (s == "rtrl") return GradMode::rtrl;
  if (s == "rflo") return GradMode::rflo;
  if (s == "diag_rtrl") return GradMode::diag_rtrl;
  throw ConfigError("unknown gradient mode '" + s + "' (expected rtrl, rflo or diag_rtrl)");
}

std::string to_string(CellType c) { return c == CellType::ctrnn ? "ctrnn" : "lru"; }

std::string to_string(GradMode m) {
  switch (m) {
    case GradMode::rtrl: return "rtrl";
    case GradMode::rflo: return "rflo";
    case GradMode::diag_rtrl: return "diag_rtrl";
  }
  return "?";
}

void check_compatible(CellType cell, GradMode mode) {
  if (cell == CellType::ctrnn && mode == GradMode::diag_rtrl) {
    throw ConfigError("diag_rtrl needs a diagonal recurrence; use rtrl or rflo with ctrnn");
  }
  if (cell == CellType::lru && mode != GradMode::diag_rtrl) {
    throw ConfigError("the lru cell is trained with diag_rtrl (its RTRL is exact and diagonal)");
  }
}

namespace {

auto engine_step(const CtRnnParams& p, const Vector& h, const Vector& x, const RtrlTrace& J) {
  return rtrl_step(p, h, x, J);
}
auto engine_step(const CtRnnParams& p, const Vector& h, const Vector& x, const RfloTrace& J) {
  return rflo_step(p, h, x, J);
}

template <typename Trace>
class CtRnnCore final : public RecurrentCore {
 public:
  CtRnnCore(const CtRnnParams& params, GradMode mode, bool train_tau)
      : p_(params), mode_(mode), train_tau_(train_tau) {
    p_.validate();
    const Index nz = p_.W.size();
    flat_.resize(nz + p_.hidden_size());
    flat_.head(nz) = Eigen::Map<const Vector>(p_.W.data(), nz);
    flat_.tail(p_.hidden_size()) = rho_from_tau(p_.tau);
    params_changed();
    reset_state();
  }

  std::unique_ptr<RecurrentCore> clone() const override {
    return std::make_unique<CtRnnCore>(*this);
  }

  CellType cell() const override { return CellType::ctrnn; }
  GradMode grad_mode() const override { return mode_; }
  Index input_size() const override { return p_.input_size(); }
  Index feature_size() const override { return p_.hidden_size(); }

  void params_changed() override {
    const Index n = p_.hidden_size();
    p_.W = Eigen::Map<const Matrix>(flat_.data(), n, p_.xi_size());
    rho_ = flat_.tail(n);
    p_.tau = tau_from_rho(rho_);
  }

  void reset_state() override {
    h_ = Vector::Zero(p_.hidden_size());
    h_next_ = h_;
    J_ = Trace::zeros(p_);
    J_next_ = J_;
  }

  void forward(const Vector& x) override {
    if (tracking_) {
      auto res = engine_step(p_, h_, x, J_);
      h_next_ = std::move(res.h);
      J_next_ = std::move(res.J);
    } else {
      h_next_ = ctrnn_step(p_, h_, x).h;
    }
  }

  void commit() override {
    std::swap(h_, h_next_);
    if (tracking_) std::swap(J_, J_next_);
  }

  const Vector& features() const override { return h_; }
  const Vector& next_features() const override { return h_next_; }

  void feedback(const Vector& eps, Eigen::Ref<Vector> out) const override {
    const CtRnnGrad g = apply_feedback(J_, eps);
    const Index nz = p_.W.size();
    out.head(nz) += Eigen::Map<const Vector>(g.W.data(), nz);
    if (train_tau_) out.tail(p_.hidden_size()) += g.tau.cwiseProduct(dtau_drho(rho_));
  }

  std::vector<Tensor> export_tensors() const override {
    return {to_tensor("rnn.W", p_.W), to_tensor("rnn.rho", rho_),
            scalar_tensor("rnn.dt", p_.dt)};
  }

  void import_tensors(const TensorMap& tensors) override {
    const Index n = p_.hidden_size();
    const Matrix W = matrix_from(require(tensors, "rnn.W"), n, p_.xi_size());
    const Vector rho = vector_from(require(tensors, "rnn.rho"), n);
    flat_.head(W.size()) = Eigen::Map<const Vector>(W.data(), W.size());
    flat_.tail(n) = rho;
    params_changed();
  }

 private:
  CtRnnParams p_;
  GradMode mode_;
  bool train_tau_;
  Vector rho_;
  Vector h_, h_next_;
  Trace J_, J_next_;
};

class LruCore final : public RecurrentCore {
 public:
  LruCore(const LruParams& params, double max_modulus) : p_(params), max_modulus_(max_modulus) {
    p_.validate();
    const Index n = p_.hidden_size();
    const Index in = p_.input_size();
    const Index out = p_.output_size();
    off_b_ = 2 * n;
    off_c_ = off_b_ + 2 * n * in;
    off_d_ = off_c_ + 2 * out * n;
    flat_.resize(off_d_ + out * in);
    pack(p_.lambda, 0);
    pack(p_.B_in, off_b_);
    pack(p_.C_out, off_c_);
    flat_.segment(off_d_, out * in) = Eigen::Map<const Vector>(p_.D_skip.data(), out * in);
    params_changed();
    reset_state();
  }

  std::unique_ptr<RecurrentCore> clone() const override { return std::make_unique<LruCore>(*this); }

  CellType cell() const override { return CellType::lru; }
  GradMode grad_mode() const override { return GradMode::diag_rtrl; }
  Index input_size() const override { return p_.input_size(); }
  Index feature_size() const override { return p_.output_size(); }

  void params_changed() override {
    const Index n = p_.hidden_size();
    const Index in = p_.input_size();
    const Index out = p_.output_size();
    p_.lambda = unpack(0, n, 1);
    for (Index i = 0; i < n; ++i) {
      const double r = std::abs(p_.lambda(i));
      // the slack keeps the projection idempotent: a rescaled lambda can land
      // an ulp above the bound and must not be rescaled again on reload
      if (r > max_modulus_ * (1.0 + 1e-12)) {
        p_.lambda(i) *= max_modulus_ / r;
        flat_(i) = p_.lambda(i).real();
        flat_(n + i) = p_.lambda(i).imag();
      }
    }
    p_.B_in = unpack(off_b_, n, in);
    p_.C_out = unpack(off_c_, out, n);
    p_.D_skip = Eigen::Map<const Matrix>(flat_.data() + off_d_, out, in);
  }

  void reset_state() override {
    h_ = CVector::Zero(p_.hidden_size());
    J_ = LruTrace::zeros(p_);
    x_ = Vector::Zero(p_.input_size());
    y_ = Vector::Zero(p_.output_size());
    h_next_ = h_;
    J_next_ = J_;
    x_next_ = x_;
    y_next_ = y_;
  }

  void forward(const Vector& x) override {
    if (tracking_) {
      auto res = lru_rtrl_step(p_, h_, x, J_);
      h_next_ = std::move(res.h);
      J_next_ = std::move(res.J);
    } else {
      h_next_ = lru_step(p_, h_, x);
    }
    x_next_ = x;
    y_next_ = lru_output(p_, h_next_, x);
  }

  void commit() override {
    std::swap(h_, h_next_);
    std::swap(x_, x_next_);
    std::swap(y_, y_next_);
    if (tracking_) std::swap(J_, J_next_);
  }

  const Vector& features() const override { return y_; }
  const Vector& next_features() const override { return y_next_; }

  void feedback(const Vector& eps, Eigen::Ref<Vector> out) const override {
    const Index in = p_.input_size();
    const Index o = p_.output_size();
    // readout: y = Re[C h] + D x, so dC = eps conj(h)^T, dD = eps x^T, and
    // the error reaching h is C^H eps
    const CMatrix dC = eps.cast<Complex>() * h_.adjoint();
    add_complex(out, dC, off_c_);
    Eigen::Map<Matrix>(out.data() + off_d_, o, in).noalias() += eps * x_.transpose();
    const CVector eps_h = p_.C_out.adjoint() * eps.cast<Complex>();
    const LruGrad g = apply_feedback(J_, eps_h);
    add_complex(out, g.lambda, 0);
    add_complex(out, g.B, off_b_);
  }

  std::vector<Tensor> export_tensors() const override {
    return {to_tensor("rnn.lambda", p_.lambda), to_tensor("rnn.B", p_.B_in),
            to_tensor("rnn.C", p_.C_out), to_tensor("rnn.D", p_.D_skip)};
  }

  void import_tensors(const TensorMap& tensors) override {
    const Index n = p_.hidden_size();
    const Index in = p_.input_size();
    const Index o = p_.output_size();
    pack(cvector_from(require(tensors, "rnn.lambda"), n), 0);
    pack(cmatrix_from(require(tensors, "rnn.B"), n, in), off_b_);
    pack(cmatrix_from(require(tensors, "rnn.C"), o, n), off_c_);
    const Matrix D = matrix_from(require(tensors, "rnn.D"), o, in);
    flat_.segment(off_d_, o * in) = Eigen::Map<const Vector>(D.data(), o * in);
    params_changed();
  }

 private:
  template <typename M>
  void pack(const M& m, Index offset) {
    const Index size = m.size();
    for (Index i = 0; i < size; ++i) {
      flat_(offset + i) = m.data()[i].real();
      flat_(offset + size + i) = m.data()[i].imag();
    }
  }

  CMatrix unpack(Index offset, Index rows, Index cols) const {
    const Index size = rows * cols;
    CMatrix m(rows, cols);
    for (Index i = 0; i < size; ++i) m.data()[i] = Complex(flat_(offset + i), flat_(offset + size + i));
    return m;
  }

  template <typename M>
  static void add_complex(Eigen::Ref<Vector> out, const M& g, Index offset) {
    const Index size = g.size();
    for (Index i = 0; i < size; ++i) {
      out(offset + i) += g.data()[i].real();
      out(offset + size + i) += g.data()[i].imag();
    }
  }

  LruParams p_;
  double max_modulus_;
  Index off_b_ = 0, off_c_ = 0, off_d_ = 0;
  CVector h_, h_next_;
  LruTrace J_, J_next_;
  Vector x_, x_next_;
  Vector y_, y_next_;
};

}  // namespace

std::unique_ptr<RecurrentCore> make_ctrnn_core(const CtRnnParams& params, GradMode mode,
                                               bool train_tau) {
  check_compatible(CellType::ctrnn, mode);
  if (mode == GradMode::rtrl) return std::make_unique<CtRnnCore<RtrlTrace>>(params, mode, train_tau);
  return std::make_unique<CtRnnCore<RfloTrace>>(params, mode, train_tau);
}

std::unique_ptr<RecurrentCore> make_lru_core(const LruParams& params, double max_modulus) {
  return std::make_unique<LruCore>(params, max_modulus);
}

std::unique_ptr<RecurrentCore> make_core(const CoreOptions& opts, Index inputs, Rng& rng) {
  check_compatible(opts.cell, opts.grad_mode);
  if (opts.hidden < 1) throw ConfigError("hidden size must be positive");
  if (opts.cell == CellType::ctrnn) {
    if (!(opts.tau_min > 1.0) || opts.tau_max < opts.tau_min) {
      throw ConfigError("tau init range must satisfy 1 < tau_min <= tau_max");
    }
    return make_ctrnn_core(init_ctrnn(opts.hidden, inputs, rng, opts.tau_min, opts.tau_max, opts.dt),
                           opts.grad_mode, opts.train_tau);
  }
  return make_lru_core(init_lru(opts.hidden, inputs, opts.hidden, rng, opts.lru_r_min,
                                opts.lru_r_max, opts.lru_max_phase),
                       opts.lru_max_modulus);
}

}  // namespace rtrrl
