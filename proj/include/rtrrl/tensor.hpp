#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rtrrl/types.hpp"

namespace rtrrl {

/// Named dense tensor used by snapshots. Data is row-major; complex tensors
/// store interleaved (re, im) pairs.
struct Tensor {
  std::string name;
  std::vector<std::int64_t> shape;
  bool is_complex = false;
  std::vector<double> data;

  std::int64_t element_count() const;
};

using TensorMap = std::map<std::string, Tensor>;

Tensor to_tensor(const std::string& name, const Matrix& m);
Tensor to_tensor(const std::string& name, const Vector& v);
Tensor to_tensor(const std::string& name, const CMatrix& m);
Tensor to_tensor(const std::string& name, const CVector& v);
Tensor scalar_tensor(const std::string& name, double value);

/// Look-ups throw ConfigError when the tensor is missing or has the wrong shape.
const Tensor& require(const TensorMap& tensors, const std::string& name);
Matrix matrix_from(const Tensor& t, Index rows, Index cols);
Vector vector_from(const Tensor& t, Index size);
CMatrix cmatrix_from(const Tensor& t, Index rows, Index cols);
CVector cvector_from(const Tensor& t, Index size);
/// Shape-agnostic readers for loaders that do not know sizes in advance.
Matrix matrix_from(const Tensor& t);
Vector vector_from(const Tensor& t);
CMatrix cmatrix_from(const Tensor& t);
CVector cvector_from(const Tensor& t);
double scalar_from(const Tensor& t);

}  // namespace rtrrl
