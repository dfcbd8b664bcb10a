#pragma once

#include "sgem/params.hpp"

namespace sgem {

/// Cosine annealing from eta_i at t = 0 to eta_f at t = N - 1.
double cosine_lr(int step, double eta_i, double eta_f, int N);

/// Adaptive-moment optimizer with decoupled weight decay. Moments are kept
/// only for the groups present in the gradients passed to step().
class AdamW {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  /// Applies one update to `params` for every group in `grads`; other groups
  /// are untouched. Returns false (and changes nothing) if any gradient entry
  /// is non-finite.
  bool step(ParameterSet& params, const ParameterSet& grads, double lr, double weight_decay);

  [[nodiscard]] int steps_taken() const { return t_; }
  [[nodiscard]] int skipped_steps() const { return skipped_; }
  void reset();

 private:
  ParameterSet m_;
  ParameterSet v_;
  int t_ = 0;
  int skipped_ = 0;
};

}  // namespace sgem
