#include "sgem/training.hpp"

#include "sgem/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sgem {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::string> all_groups(const AcousticModel& model) { return model.group_names(); }

double global_norm(const ParameterSet& grads) {
  double sq = 0.0;
  grads.for_each([&](const std::string&, const std::string&, const Matrix& m) { sq += m.squaredNorm(); });
  return std::sqrt(sq);
}

void accumulate(ParameterSet& into, const ParameterSet& from, double scale) {
  for (const auto& g : from.groups()) {
    for (const auto& a : g.arrays) into.at(g.name, a.name) += scale * a.value;
  }
}

}  // namespace

double ctc_loss(const LogitMatrix& logits, const TokenSequence& target, int blank, Matrix* grad) {
  const int L = logits.rows();
  const int S = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> label(static_cast<std::size_t>(S), blank);
  for (std::size_t i = 0; i < target.size(); ++i) label[2 * i + 1] = target.ids[i];
  auto skip_ok = [&](int s) {
    return s >= 2 && label[static_cast<std::size_t>(s)] != blank &&
           label[static_cast<std::size_t>(s)] != label[static_cast<std::size_t>(s - 2)];
  };
  auto emit = [&](int t, int s) { return logits.values(t, label[static_cast<std::size_t>(s)]); };

  Matrix alpha = Matrix::Constant(L, S, kNegInf);
  alpha(0, 0) = emit(0, 0);
  if (S > 1) alpha(0, 1) = emit(0, 1);
  for (int t = 1; t < L; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add_exp(a, alpha(t - 1, s - 1));
      if (skip_ok(s)) a = log_add_exp(a, alpha(t - 1, s - 2));
      if (a != kNegInf) alpha(t, s) = a + emit(t, s);
    }
  }
  double log_p = alpha(L - 1, S - 1);
  if (S > 1) log_p = log_add_exp(log_p, alpha(L - 1, S - 2));
  if (grad) *grad = Matrix::Zero(L, logits.cols());
  if (log_p == kNegInf) return std::numeric_limits<double>::infinity();
  if (!grad) return -log_p;

  Matrix beta = Matrix::Constant(L, S, kNegInf);
  beta(L - 1, S - 1) = 0.0;
  if (S > 1) beta(L - 1, S - 2) = 0.0;
  for (int t = L - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double b = beta(t + 1, s) + emit(t + 1, s);
      if (s + 1 < S) b = log_add_exp(b, beta(t + 1, s + 1) + emit(t + 1, s + 1));
      if (s + 2 < S && skip_ok(s + 2)) b = log_add_exp(b, beta(t + 1, s + 2) + emit(t + 1, s + 2));
      beta(t, s) = b;
    }
  }
  for (int t = 0; t < L; ++t) {
    for (int s = 0; s < S; ++s) {
      const double occ = alpha(t, s) + beta(t, s) - log_p;
      if (occ != kNegInf) (*grad)(t, label[static_cast<std::size_t>(s)]) -= std::exp(occ);
    }
  }
  return -log_p;
}

double supervised_loss(const AcousticModel& model, const Utterance& utt, ParameterSet* grads) {
  if (!utt.reference) throw Error("utterance '" + utt.id + "' has no reference for training");
  const TokenSequence target = encode_text(model.vocab(), *utt.reference);
  ForwardRecord rec;
  Matrix d_logits;
  double loss = 0.0;
  if (model.mode() == ModelMode::frame_synchronous) {
    rec = model.forward_frames_record(utt);
    loss = ctc_loss(rec.logits, target, model.vocab().blank_index(), grads ? &d_logits : nullptr);
  } else {
    rec = model.teacher_force(utt, target, true);
    d_logits = Matrix::Zero(rec.logits.rows(), rec.logits.cols());
    for (int i = 0; i < rec.logits.rows(); ++i) {
      const int k = i < static_cast<int>(target.size()) ? target.ids[static_cast<std::size_t>(i)]
                                                         : model.vocab().blank_index();
      loss -= rec.logits.values(i, k);
      d_logits(i, k) = -1.0;
    }
  }
  if (grads && std::isfinite(loss)) *grads = model.backward(rec, d_logits, all_groups(model)).grads;
  return loss;
}

double train_step(AcousticModel& model, const std::vector<const Utterance*>& batch, AdamW& optimizer,
                  double lr, double clip_norm, double weight_decay) {
  if (batch.empty()) throw Error("empty training batch");
  ParameterSet total = model.params().zeros_like();
  double loss = 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Utterance* utt : batch) {
    ParameterSet g;
    const double l = supervised_loss(model, *utt, &g);
    if (!std::isfinite(l)) return l;
    loss += scale * l;
    accumulate(total, g, scale);
  }
  const double norm = global_norm(total);
  if (clip_norm > 0.0 && norm > clip_norm) {
    total.for_each([&](const std::string&, const std::string&, Matrix& m) { m *= clip_norm / norm; });
  }
  optimizer.step(model.params(), total, lr, weight_decay);
  return loss;
}

TrainingReport train_source(AcousticModel& model, const std::vector<Utterance>& corpus,
                            const TrainingConfig& config, const std::function<void(int, double)>& on_epoch) {
  TrainingReport report;
  if (config.epochs <= 0 || corpus.empty()) {
    model.round_to_float();
    return report;
  }
  const int batch = std::max(1, config.batch_size);
  const int per_epoch = (static_cast<int>(corpus.size()) + batch - 1) / batch;
  const int total_steps = per_epoch * config.epochs;
  Rng rng(config.seed);
  AdamW optimizer;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const ModelSnapshot last_good = model.snapshot();
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<int>(i) - 1))]);
    }
    double sum = 0.0;
    for (int b = 0; b < per_epoch; ++b) {
      std::vector<const Utterance*> items;
      for (int j = b * batch; j < std::min<int>((b + 1) * batch, static_cast<int>(order.size())); ++j) {
        items.push_back(&corpus[order[static_cast<std::size_t>(j)]]);
      }
      const double lr = cosine_lr(report.steps, config.learning_rate,
                                  std::min(config.final_learning_rate, config.learning_rate), total_steps);
      const double loss = train_step(model, items, optimizer, lr, config.clip_norm, config.weight_decay);
      ++report.steps;
      if (!std::isfinite(loss) || !model.params().all_finite()) {
        model.restore(last_good);
        model.round_to_float();
        report.diverged = true;
        return report;
      }
      sum += loss * static_cast<double>(items.size());
    }
    report.epoch_loss.push_back(sum / static_cast<double>(corpus.size()));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  model.round_to_float();
  return report;
}

}  // namespace sgem
