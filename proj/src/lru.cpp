#include "rtrrl/lru.hpp"

#include <cmath>
#include <random>

namespace rtrrl {

void LruParams::validate() const {
  const Index n = lambda.size();
  if (n < 1 || B_in.rows() != n || C_out.cols() != n || D_skip.rows() != C_out.rows() ||
      D_skip.cols() != B_in.cols()) {
    throw ConfigError("lru: inconsistent parameter shapes");
  }
  if (!lambda.allFinite()) {
    throw ConfigError("lru: non-finite recurrent eigenvalues");
  }
}

CVector lru_step(const LruParams& params, const CVector& h, const Vector& x) {
  if (h.size() != params.hidden_size() || x.size() != params.input_size()) {
    throw ConfigError("lru: state/input size mismatch");
  }
  CVector out = params.lambda.cwiseProduct(h);
  out.noalias() += params.B_in * x.cast<Complex>();
  if (!out.allFinite()) {
    throw NumericFault("lru: non-finite hidden state");
  }
  return out;
}

Vector lru_output(const LruParams& params, const CVector& h, const Vector& x) {
  if (h.size() != params.hidden_size() || x.size() != params.input_size()) {
    throw ConfigError("lru: state/input size mismatch");
  }
  Vector y = (params.C_out * h).real();
  y.noalias() += params.D_skip * x;
  return y;
}

LruParams init_lru(Index hidden, Index inputs, Index outputs, Rng& rng, double r_min,
                   double r_max, double max_phase) {
  LruParams p;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  p.lambda.resize(hidden);
  p.B_in.resize(hidden, inputs);
  for (Index i = 0; i < hidden; ++i) {
    const double r = std::sqrt(r_min * r_min + unit(rng) * (r_max * r_max - r_min * r_min));
    const double phase = unit(rng) * max_phase;
    p.lambda(i) = std::polar(r, phase);
    const double gain = std::sqrt(1.0 - r * r) / std::sqrt(2.0 * static_cast<double>(inputs));
    for (Index j = 0; j < inputs; ++j) {
      p.B_in(i, j) = Complex(normal(rng), normal(rng)) * gain;
    }
  }
  const double c_gain = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.C_out.resize(outputs, hidden);
  for (Index o = 0; o < outputs; ++o) {
    for (Index i = 0; i < hidden; ++i) p.C_out(o, i) = Complex(normal(rng), normal(rng)) * c_gain;
  }
  const double d_gain = 1.0 / std::sqrt(static_cast<double>(inputs));
  p.D_skip.resize(outputs, inputs);
  for (Index o = 0; o < outputs; ++o) {
    for (Index j = 0; j < inputs; ++j) p.D_skip(o, j) = normal(rng) * d_gain;
  }
  return p;
}

}  // namespace rtrrl
