#include "sgem/optim.hpp"

#include <algorithm>
#include <cmath>

namespace sgem {

double cosine_lr(int step, double eta_i, double eta_f, int N) {
  if (N < 1) throw Error("cosine_lr needs N >= 1");
  if (step < 0 || step >= N) throw Error("cosine_lr step out of range");
  if (step == 0) return eta_i;
  if (step == N - 1) return eta_f;
  const double span = static_cast<double>(std::max(N - 1, 1));
  return eta_f + 0.5 * (eta_i - eta_f) * (1.0 + std::cos(M_PI * step / span));
}

bool AdamW::step(ParameterSet& params, const ParameterSet& grads, double lr, double weight_decay) {
  if (!grads.all_finite()) {
    ++skipped_;
    return false;
  }
  if (t_ == 0) {
    m_ = grads.zeros_like();
    v_ = grads.zeros_like();
  } else if (!m_.same_layout(grads)) {
    throw Error("optimizer received gradients with a different layout");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, t_);
  const double bc2 = 1.0 - std::pow(kBeta2, t_);
  for (const auto& g : grads.groups()) {
    for (const auto& a : g.arrays) {
      Matrix& p = params.at(g.name, a.name);
      Matrix& m = m_.at(g.name, a.name);
      Matrix& v = v_.at(g.name, a.name);
      m = kBeta1 * m + (1.0 - kBeta1) * a.value;
      v = kBeta2 * v + (1.0 - kBeta2) * a.value.cwiseProduct(a.value);
      if (weight_decay != 0.0) p -= lr * weight_decay * p;
      p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEpsilon);
    }
  }
  return true;
}

void AdamW::reset() {
  m_ = {};
  v_ = {};
  t_ = 0;
  skipped_ = 0;
}

}  // namespace sgem
