#include "sgem/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace sgem {
namespace {

const double kLogFloor = std::log(kProbFloor);

RowVector temperature_log_softmax(const Eigen::Ref<const RowVector>& row, double T) {
  RowVector scaled = row / T;
  scaled.array() -= log_sum_exp(scaled);
  return scaled;
}

/// Maps d loss / d p to d loss / d o for p = softmax(o / T).
RowVector chain_through_softmax(const RowVector& p, const RowVector& dp, double T) {
  const double inner = p.dot(dp);
  return (p.array() * (dp.array() - inner) / T).matrix();
}

void check_mask(const LogitMatrix& logits, const RowMask& mask) {
  if (static_cast<int>(mask.size()) != logits.rows()) throw Error("mask length differs from logit rows");
}

}  // namespace

RowVector temperature_softmax(const Eigen::Ref<const RowVector>& row, double T) {
  return temperature_log_softmax(row, T).array().exp().matrix();
}

RowMask blank_argmax_mask(const LogitMatrix& logits, int blank_index) {
  RowMask mask(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) {
    const auto row = logits.values.row(i);
    const double blank = row[blank_index];
    bool blank_wins = true;
    for (int j = 0; j < row.size(); ++j) {
      if (j != blank_index && row[j] > blank) {
        blank_wins = false;
        break;
      }
    }
    mask[static_cast<std::size_t>(i)] = blank_wins ? 0 : 1;
  }
  return mask;
}

RowMask all_rows(int rows) { return RowMask(static_cast<std::size_t>(rows), 1); }

RowMask mask_and(const RowMask& a, const RowMask& b) {
  if (a.size() != b.size()) throw Error("mask lengths differ");
  RowMask out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

int count_rows(const RowMask& mask) {
  return static_cast<int>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

double shannon_entropy(const Eigen::Ref<const RowVector>& p) {
  double h = 0.0;
  for (int j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) h -= p[j] * std::max(std::log(p[j]), kLogFloor);
  }
  return std::max(h, 0.0);
}

double renyi_entropy(const Eigen::Ref<const RowVector>& p, double alpha) {
  if (alpha == 1.0) return shannon_entropy(p);
  double s = 0.0;
  for (int j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) s += std::exp(alpha * std::max(std::log(p[j]), kLogFloor));
  }
  return std::max(std::log(s) / (1.0 - alpha), 0.0);
}

LossTerm gem_loss(const LogitMatrix& logits, const RowMask& mask, double alpha, double T) {
  check_mask(logits, mask);
  LossTerm out{0.0, false, Matrix::Zero(logits.rows(), logits.cols())};
  const int used = count_rows(mask);
  if (used == 0) {
    out.all_masked = true;
    return out;
  }
  const double inv = 1.0 / used;
  for (int i = 0; i < logits.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const RowVector logp = temperature_log_softmax(logits.values.row(i), T);
    const RowVector p = logp.array().exp().matrix();
    const RowVector clamped = logp.cwiseMax(kLogFloor);
    RowVector dp(p.size());
    if (alpha == 1.0) {
      out.value += inv * shannon_entropy(p);
      for (int j = 0; j < p.size(); ++j) {
        dp[j] = logp[j] >= kLogFloor ? -(clamped[j] + 1.0) : -clamped[j];
      }
    } else {
      const RowVector powed = (alpha * clamped.array()).exp().matrix();
      const double s = powed.sum();
      out.value += inv * std::log(s) / (1.0 - alpha);
      for (int j = 0; j < p.size(); ++j) {
        // d/dp_j of p_j^alpha is alpha p_j^(alpha-1); zero below the floor
        dp[j] = logp[j] >= kLogFloor ? alpha * powed[j] / p[j] / ((1.0 - alpha) * s) : 0.0;
      }
    }
    out.grad.row(i) = inv * chain_through_softmax(p, dp, T);
  }
  out.value = std::max(out.value, 0.0);
  return out;
}

Matrix negative_classes(const LogitMatrix& logits, double tau) {
  Matrix neg(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    const RowVector p1 = temperature_softmax(logits.values.row(i), 1.0);
    for (int j = 0; j < logits.cols(); ++j) neg(i, j) = p1[j] < tau ? 1.0 : 0.0;
  }
  return neg;
}

LossTerm ns_loss(const LogitMatrix& logits, const RowMask& mask, double tau, double T) {
  return ns_loss(logits, mask, negative_classes(logits, tau), T);
}

LossTerm ns_loss(const LogitMatrix& logits, const RowMask& mask, const Matrix& negatives, double T) {
  check_mask(logits, mask);
  if (negatives.rows() != logits.rows() || negatives.cols() != logits.cols()) {
    throw Error("negative-class matrix shape differs from logits");
  }
  LossTerm out{0.0, false, Matrix::Zero(logits.rows(), logits.cols())};
  const int used = count_rows(mask);
  if (used == 0) {
    out.all_masked = true;
    return out;
  }
  const double inv = 1.0 / used;
  for (int i = 0; i < logits.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const RowVector p = temperature_softmax(logits.values.row(i), T);
    const double neg_mass = p.dot(negatives.row(i));
    const double arg = 1.0 - neg_mass;
    if (arg <= kProbFloor) {
      out.value += inv * -std::log(kProbFloor);
      continue;
    }
    out.value += inv * -std::log(arg);
    const RowVector dp = negatives.row(i) / arg;
    out.grad.row(i) = inv * chain_through_softmax(p, dp, T);
  }
  out.value = std::max(out.value, 0.0);
  return out;
}

LossBreakdown combined_loss(const LogitMatrix& logits, const RowMask& mask_gem,
                            const RowMask& mask_ns, const AdaptationConfig& config, Matrix* grad) {
  return combined_loss(logits, mask_gem, mask_ns, negative_classes(logits, config.tau(logits.cols())),
                       config, grad);
}

LossBreakdown combined_loss(const LogitMatrix& logits, const RowMask& mask_gem,
                            const RowMask& mask_ns, const Matrix& negatives,
                            const AdaptationConfig& config, Matrix* grad) {
  check_mask(logits, mask_gem);
  check_mask(logits, mask_ns);
  LossBreakdown out;
  out.lambda_ns = config.lambda_ns;
  if (grad) *grad = Matrix::Zero(logits.rows(), logits.cols());

  if (config.use_gem) {
    LossTerm g = gem_loss(logits, mask_gem, config.alpha, config.T);
    out.gem = g.value;
    out.gem_all_masked = g.all_masked;
    if (grad) *grad += g.grad;
  }
  if (config.use_ns) {
    LossTerm n = ns_loss(logits, mask_ns, negatives, config.T);
    out.ns = n.value;
    out.ns_all_masked = n.all_masked;
    if (grad) *grad += config.lambda_ns * n.grad;
  }
  out.total = out.gem + config.lambda_ns * out.ns;

  for (std::size_t i = 0; i < mask_gem.size(); ++i) {
    const bool used = (config.use_gem && mask_gem[i]) || (config.use_ns && mask_ns[i]);
    (used ? out.frames_used : out.masked_frames) += 1;
  }
  return out;
}

}  // namespace sgem
