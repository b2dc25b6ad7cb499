#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rtrrl/ctrnn.hpp"
#include "rtrrl/lru.hpp"
#include "rtrrl/online_grad.hpp"
#include "rtrrl/tensor.hpp"

namespace rtrrl {

enum class CellType { ctrnn, lru };
enum class GradMode { rtrl, rflo, diag_rtrl };

CellType parse_cell_type(const std::string& s);
GradMode parse_grad_mode(const std::string& s);
std::string to_string(CellType c);
std::string to_string(GradMode m);

/// Throws ConfigError for combinations without an engine (e.g. diag_rtrl on a CT-RNN).
void check_compatible(CellType cell, GradMode mode);

// The recurrent layer of the agent together with its online gradient engine.
//
// The trainable parameters live in one flat vector so that eligibility
// traces and optimizers can treat them as a single block. Complex parameters
// occupy two slots (real part, then imaginary part) and gradients use the
// matching dL/dRe, dL/dIm layout.
//
// A step is split in two: forward() computes the next state and trace
// without touching the current one, commit() makes it current. Between the
// two, features() and feedback() still refer to the state that produced
// the last action.
class RecurrentCore {
 public:
  virtual ~RecurrentCore() = default;

  virtual std::unique_ptr<RecurrentCore> clone() const = 0;

  virtual CellType cell() const = 0;
  virtual GradMode grad_mode() const = 0;
  virtual Index input_size() const = 0;
  virtual Index feature_size() const = 0;
  Index param_count() const { return flat_.size(); }

  Vector& params() { return flat_; }
  const Vector& params() const { return flat_; }
  /// Re-derive the structured parameters after params() was modified.
  virtual void params_changed() = 0;

  /// When off, forward() skips the trace recursion (evaluation rollouts).
  void set_tracking(bool on) { tracking_ = on; }
  bool tracking() const { return tracking_; }

  /// Zero hidden state and trace.
  virtual void reset_state() = 0;
  virtual void forward(const Vector& x) = 0;
  virtual void commit() = 0;

  virtual const Vector& features() const = 0;
  virtual const Vector& next_features() const = 0;

  /// out += J^T eps, where eps is dL/d(features) of the committed state.
  virtual void feedback(const Vector& eps, Eigen::Ref<Vector> out) const = 0;

  virtual std::vector<Tensor> export_tensors() const = 0;
  virtual void import_tensors(const TensorMap& tensors) = 0;

 protected:
  Vector flat_;
  bool tracking_ = true;
};

struct CoreOptions {
  CellType cell = CellType::ctrnn;
  GradMode grad_mode = GradMode::rflo;
  Index hidden = 32;
  double dt = 1.0;
  double tau_min = 1.5;
  double tau_max = 4.0;
  bool train_tau = true;
  double lru_r_min = 0.5;
  double lru_r_max = 0.99;
  double lru_max_phase = 0.39269908169872414;  // pi / 8
  double lru_max_modulus = 0.9999;             // projection bound after updates
};

std::unique_ptr<RecurrentCore> make_core(const CoreOptions& opts, Index inputs, Rng& rng);

/// Wrap explicit parameters (tests, snapshots).
std::unique_ptr<RecurrentCore> make_ctrnn_core(const CtRnnParams& params, GradMode mode,
                                               bool train_tau = true);
std::unique_ptr<RecurrentCore> make_lru_core(const LruParams& params, double max_modulus = 0.9999);

}  // namespace rtrrl
