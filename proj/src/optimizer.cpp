#include "rtrrl/optimizer.hpp"

#include <cmath>

namespace rtrrl {

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

BlockOptimizer::BlockOptimizer(const OptimizerConfig& cfg, Index size) : cfg_(cfg) {
  if (cfg.kind == OptimizerKind::adam) {
    m_ = Vector::Zero(size);
    v_ = Vector::Zero(size);
  }
}

void BlockOptimizer::step(Eigen::Ref<Vector> params, const Vector& grad, double lr) {
  if (cfg_.kind == OptimizerKind::sgd) {
    params -= lr * grad;
    return;
  }
  ++t_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
}

void BlockOptimizer::restore(const Vector& m, const Vector& v, long t) {
  if (cfg_.kind == OptimizerKind::adam && (m.size() != m_.size() || v.size() != v_.size())) {
    throw ConfigError("optimizer state size mismatch");
  }
  m_ = m;
  v_ = v;
  t_ = t;
}

double clip_by_norm(Vector& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

}  // namespace rtrrl
