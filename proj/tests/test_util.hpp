#pragma once

#include <random>
#include <vector>

#include "rtrrl/types.hpp"

namespace rtrrl::testing {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  return random_matrix(n, 1, rng, scale);
}

inline CMatrix random_cmatrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  Matrix re = random_matrix(rows, cols, rng, scale);
  Matrix im = random_matrix(rows, cols, rng, scale);
  CMatrix m(rows, cols);
  m.real() = re;
  m.imag() = im;
  return m;
}

inline CVector random_cvector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  return random_cmatrix(n, 1, rng, scale);
}

inline std::vector<Vector> random_inputs(Index dim, int steps, std::mt19937_64& rng) {
  std::vector<Vector> xs;
  for (int t = 0; t < steps; ++t) xs.push_back(random_vector(dim, rng));
  return xs;
}

}  // namespace rtrrl::testing
