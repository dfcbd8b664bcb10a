#pragma once

#include "sgem/acoustic.hpp"
#include "sgem/optim.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace sgem {

/// -log p(target | x) under CTC, summed over all alignments. If `grad` is
/// non-null it receives d loss / d logits (L x C).
double ctc_loss(const LogitMatrix& logits, const TokenSequence& target, int blank, Matrix* grad = nullptr);

struct TrainingConfig {
  int epochs = 20;
  double learning_rate = 3e-3;
  double final_learning_rate = 3e-4;
  int batch_size = 8;
  double clip_norm = 5.0;
  double weight_decay = 0.0;  // decoupled
  std::uint64_t seed = 0;
};

struct TrainingReport {
  std::vector<double> epoch_loss;  // mean per-utterance loss
  int steps = 0;
  bool diverged = false;
};

/// Supervised loss of one utterance (CTC for frame-synchronous models,
/// teacher-forced cross-entropy including end-of-sequence otherwise) and its
/// gradient over every parameter group.
double supervised_loss(const AcousticModel& model, const Utterance& utt, ParameterSet* grads);

/// One optimizer step on the mean loss of `batch`; returns that mean loss
/// (before the update).
double train_step(AcousticModel& model, const std::vector<const Utterance*>& batch, AdamW& optimizer,
                  double lr, double clip_norm, double weight_decay = 0.0);

/// Source-domain training with shuffled minibatches and a cosine learning
/// rate. On a non-finite loss the parameters roll back to the last finite
/// epoch and the report is flagged as diverged. Parameters end rounded to
/// float precision so the in-memory model equals its checkpoint.
TrainingReport train_source(AcousticModel& model, const std::vector<Utterance>& corpus,
                            const TrainingConfig& config,
                            const std::function<void(int, double)>& on_epoch = {});

}  // namespace sgem
