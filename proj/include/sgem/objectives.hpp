#pragma once

#include "sgem/config.hpp"
#include "sgem/core.hpp"

namespace sgem {

/// Probabilities below this floor are clamped inside logarithms.
inline constexpr double kProbFloor = 1e-12;

struct LossBreakdown {
  double gem = 0.0;
  double ns = 0.0;
  double total = 0.0;
  double lambda_ns = 0.0;
  int frames_used = 0;
  int masked_frames = 0;
  bool gem_all_masked = false;
  bool ns_all_masked = false;
};

/// A single loss term with its gradient with respect to the logit entries.
struct LossTerm {
  double value = 0.0;
  bool all_masked = false;
  Matrix grad;  // same shape as the logits; zero rows where masked out
};

/// softmax(row / T), max-subtracted.
RowVector temperature_softmax(const Eigen::Ref<const RowVector>& row, double T);

/// false exactly where the row's argmax is blank (ties count as blank).
RowMask blank_argmax_mask(const LogitMatrix& logits, int blank_index);
RowMask all_rows(int rows);
RowMask mask_and(const RowMask& a, const RowMask& b);
int count_rows(const RowMask& mask);

/// Renyi entropy of order alpha; alpha == 1 gives Shannon entropy.
double renyi_entropy(const Eigen::Ref<const RowVector>& p, double alpha);
double shannon_entropy(const Eigen::Ref<const RowVector>& p);

/// Generalized entropy loss: mean Renyi entropy of softmax(o / T) over
/// masked-in rows.
LossTerm gem_loss(const LogitMatrix& logits, const RowMask& mask, double alpha, double T);

/// 1 where softmax(o) (temperature 1) falls below tau.
Matrix negative_classes(const LogitMatrix& logits, double tau);

/// Negative sampling loss: mean over masked-in rows of
/// -log(1 - sum_j [p'_ij < tau] p_ij), with p at temperature T and p' at 1.
/// The selection is held constant when differentiating.
LossTerm ns_loss(const LogitMatrix& logits, const RowMask& mask, double tau, double T);
LossTerm ns_loss(const LogitMatrix& logits, const RowMask& mask, const Matrix& negatives, double T);

/// gem + lambda_ns * ns, honoring use_gem / use_ns. If `grad` is non-null it
/// receives d total / d logits.
LossBreakdown combined_loss(const LogitMatrix& logits, const RowMask& mask_gem,
                            const RowMask& mask_ns, const AdaptationConfig& config,
                            Matrix* grad = nullptr);

/// Same as above with a fixed negative-class selection.
LossBreakdown combined_loss(const LogitMatrix& logits, const RowMask& mask_gem,
                            const RowMask& mask_ns, const Matrix& negatives,
                            const AdaptationConfig& config, Matrix* grad = nullptr);

}  // namespace sgem
