#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtrrl/types.hpp"

namespace rtrrl {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst error over the instances
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  bool quick = false;         // T <= 8, N <= 3, fewer instances
  std::uint64_t seed = 2024;
  std::string inject;         // property whose engine output gets perturbed (negative control)
};

// Each check compares an engine against the independent reference code.
PropertyResult check_rtrl_vs_fd(const VerifyOptions& opts);
PropertyResult check_rtrl_vs_unrolled(const VerifyOptions& opts);
PropertyResult check_oracle_cross(const VerifyOptions& opts);
PropertyResult check_lru_vs_fd(const VerifyOptions& opts);
PropertyResult check_lru_vs_unrolled(const VerifyOptions& opts);
PropertyResult check_lru_closed_form(const VerifyOptions& opts);
PropertyResult check_rflo_structure(const VerifyOptions& opts);
PropertyResult check_rflo_tau_trace(const VerifyOptions& opts);
PropertyResult check_td_convergence(const VerifyOptions& opts, double lambda);

std::vector<std::string> property_names();
std::vector<PropertyResult> run_verification(const VerifyOptions& opts);

// Linear TD(lambda) critic with one-hot features on a finite MRP, trained by
// plain SGD through the library's trace and optimizer code.
struct TdRun {
  Vector final_weights;
  Vector averaged_weights;  // mean of the iterates over the second half
};
TdRun run_td_critic(const Matrix& P, const Vector& rewards, double gamma, double lambda,
                    double alpha, std::int64_t steps, std::uint64_t seed);

/// Five-state ring: advance with probability 0.9, otherwise stay; the reward
/// for leaving state s is s / 4.
void ring_mrp(Matrix& P, Vector& rewards);

}  // namespace rtrrl
