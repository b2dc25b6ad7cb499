#pragma once

#include <string>

#include "rtrrl/types.hpp"

namespace rtrrl {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& s);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First-order optimizer state for one flat parameter block.
class BlockOptimizer {
 public:
  BlockOptimizer() = default;
  BlockOptimizer(const OptimizerConfig& cfg, Index size);

  /// params <- params - lr * update(grad)
  void step(Eigen::Ref<Vector> params, const Vector& grad, double lr);

  const OptimizerConfig& config() const { return cfg_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }
  long steps() const { return t_; }
  void restore(const Vector& m, const Vector& v, long t);

 private:
  OptimizerConfig cfg_;
  Vector m_;
  Vector v_;
  long t_ = 0;
};

/// Scales grad in place so that ||grad|| <= max_norm; returns the original norm.
double clip_by_norm(Vector& grad, double max_norm);

}  // namespace rtrrl
