#pragma once

#include "rtrrl/rng.hpp"
#include "rtrrl/types.hpp"

namespace rtrrl {

// Linear recurrent unit: diagonal complex recurrence with a real readout.
//   h' = lambda .* h + B x
//   y  = Re[C h] + D x
struct LruParams {
  CVector lambda;  // N
  CMatrix B_in;    // N x I
  CMatrix C_out;   // O x N
  Matrix D_skip;   // O x I

  Index hidden_size() const { return lambda.size(); }
  Index input_size() const { return B_in.cols(); }
  Index output_size() const { return C_out.rows(); }

  void validate() const;
};

CVector lru_step(const LruParams& params, const CVector& h, const Vector& x);

Vector lru_output(const LruParams& params, const CVector& h, const Vector& x);

/// lambda uniform on the annulus r_min <= |lambda| <= r_max with phase in
/// [0, max_phase]; B rows scaled by sqrt(1 - |lambda|^2) so that the
/// stationary state has unit-order magnitude.
LruParams init_lru(Index hidden, Index inputs, Index outputs, Rng& rng, double r_min = 0.5,
                   double r_max = 0.99, double max_phase = 0.39269908169872414);

}  // namespace rtrrl
