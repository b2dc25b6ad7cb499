#include "rtrrl/tensor.hpp"

namespace rtrrl {

std::int64_t Tensor::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

template <typename M>
Tensor real_tensor(const std::string& name, const M& m, std::vector<std::int64_t> shape) {
  Tensor t{name, std::move(shape), false, {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
  }
  return t;
}

template <typename M>
Tensor complex_tensor(const std::string& name, const M& m, std::vector<std::int64_t> shape) {
  Tensor t{name, std::move(shape), true, {}};
  t.data.reserve(static_cast<std::size_t>(2 * m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      t.data.push_back(m(r, c).real());
      t.data.push_back(m(r, c).imag());
    }
  }
  return t;
}

void expect_shape(const Tensor& t, bool is_complex, std::vector<std::int64_t> shape) {
  if (t.is_complex != is_complex || t.shape != shape) {
    throw ConfigError("tensor '" + t.name + "' has unexpected type or shape");
  }
  const auto expected = t.element_count() * (is_complex ? 2 : 1);
  if (static_cast<std::int64_t>(t.data.size()) != expected) {
    throw ConfigError("tensor '" + t.name + "' data length does not match its shape");
  }
}

std::pair<Index, Index> dims2(const Tensor& t) {
  if (t.shape.size() == 2) return {t.shape[0], t.shape[1]};
  if (t.shape.size() == 1) return {t.shape[0], 1};
  throw ConfigError("tensor '" + t.name + "' is not a vector or matrix");
}

}  // namespace

Tensor to_tensor(const std::string& name, const Matrix& m) {
  return real_tensor(name, m, {m.rows(), m.cols()});
}
Tensor to_tensor(const std::string& name, const Vector& v) { return real_tensor(name, v, {v.size()}); }
Tensor to_tensor(const std::string& name, const CMatrix& m) {
  return complex_tensor(name, m, {m.rows(), m.cols()});
}
Tensor to_tensor(const std::string& name, const CVector& v) {
  return complex_tensor(name, v, {v.size()});
}
Tensor scalar_tensor(const std::string& name, double value) { return {name, {}, false, {value}}; }

const Tensor& require(const TensorMap& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ConfigError("missing tensor '" + name + "'");
  return it->second;
}

Matrix matrix_from(const Tensor& t, Index rows, Index cols) {
  expect_shape(t, false, {rows, cols});
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = t.data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

Vector vector_from(const Tensor& t, Index size) {
  expect_shape(t, false, {size});
  return Eigen::Map<const Vector>(t.data.data(), size);
}

CMatrix cmatrix_from(const Tensor& t, Index rows, Index cols) {
  expect_shape(t, true, {rows, cols});
  CMatrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const auto i = static_cast<std::size_t>(2 * (r * cols + c));
      m(r, c) = Complex(t.data[i], t.data[i + 1]);
    }
  }
  return m;
}

CVector cvector_from(const Tensor& t, Index size) {
  expect_shape(t, true, {size});
  CVector v(size);
  for (Index i = 0; i < size; ++i) {
    v(i) = Complex(t.data[static_cast<std::size_t>(2 * i)], t.data[static_cast<std::size_t>(2 * i + 1)]);
  }
  return v;
}

Matrix matrix_from(const Tensor& t) {
  const auto [r, c] = dims2(t);
  if (t.shape.size() != 2) throw ConfigError("tensor '" + t.name + "' is not a matrix");
  return matrix_from(t, r, c);
}

Vector vector_from(const Tensor& t) {
  if (t.shape.size() != 1) throw ConfigError("tensor '" + t.name + "' is not a vector");
  return vector_from(t, t.shape[0]);
}

CMatrix cmatrix_from(const Tensor& t) {
  if (t.shape.size() != 2) throw ConfigError("tensor '" + t.name + "' is not a matrix");
  return cmatrix_from(t, t.shape[0], t.shape[1]);
}

CVector cvector_from(const Tensor& t) {
  if (t.shape.size() != 1) throw ConfigError("tensor '" + t.name + "' is not a vector");
  return cvector_from(t, t.shape[0]);
}

double scalar_from(const Tensor& t) {
  expect_shape(t, false, {});
  return t.data[0];
}

}  // namespace rtrrl
