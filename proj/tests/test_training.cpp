#include "sgem/corpus.hpp"
#include "sgem/decoding.hpp"
#include "sgem/training.hpp"
#include "support.hpp"

#include <doctest.h>

#include <map>

using namespace sgem;
using namespace sgem::test;

namespace {

// Sums exp(path score) over every length-L alignment collapsing to target.
double brute_force_ctc(const LogitMatrix& logits, const TokenSequence& target, const Vocabulary& vocab) {
  const int L = logits.rows(), C = logits.cols();
  std::vector<int> path(static_cast<std::size_t>(L), 0);
  double total = 0.0;
  while (true) {
    double score = 0.0;
    for (int t = 0; t < L; ++t) score += logits.values(t, path[static_cast<std::size_t>(t)]);
    if (ctc_collapse(TokenSequence{path}, vocab) == target) total += std::exp(score);
    int t = 0;
    while (t < L && ++path[static_cast<std::size_t>(t)] == C) path[static_cast<std::size_t>(t++)] = 0;
    if (t == L) break;
  }
  return total;
}

}  // namespace

TEST_CASE("ctc loss equals the alignment sum") {
  Rng rng(1);
  for (int n = 0; n < 60; ++n) {
    const int C = rng.integer(2, 4);
    const int L = rng.integer(1, 5);
    const Vocabulary vocab = tiny_vocabulary(C);
    const LogitMatrix logits = random_logits(rng, L, C);
    TokenSequence target;
    const int len = rng.integer(0, 3);
    for (int i = 0; i < len; ++i) target.ids.push_back(rng.integer(1, C - 1));
    const double oracle = brute_force_ctc(logits, target, vocab);
    const double loss = ctc_loss(logits, target, 0);
    if (oracle == 0.0) {
      CHECK(std::isinf(loss));
      CHECK(L < min_alignment_frames(target));
    } else {
      CHECK(loss == doctest::Approx(-std::log(oracle)).epsilon(1e-10));
    }
  }
}

TEST_CASE("ctc loss gradient matches central differences") {
  Rng rng(2);
  for (int n = 0; n < 10; ++n) {
    LogitMatrix logits = random_logits(rng, 7, 5);
    const TokenSequence target{{1, 3, 3, 2}};
    Matrix grad;
    ctc_loss(logits, target, 0, &grad);
    for (Eigen::Index i = 0; i < logits.values.size(); ++i) {
      const double numeric =
          central_difference([&] { return ctc_loss(logits, target, 0); }, logits.values.data()[i], 1e-5);
      CHECK(relative_error(grad.data()[i], numeric, 1e-4) < 1e-6);
    }
    // Occupancies of each frame sum to one.
    CHECK((grad.rowwise().sum().array() + 1.0).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("source training overfits a single utterance") {
  const Vocabulary vocab = Vocabulary::reference();
  const auto corpus = make_synthetic_corpus(vocab, 1, {4, 8}, EmissionParams{}, 3);
  AcousticModel model(ModelDims{}, vocab, ModelMode::frame_synchronous, 1);
  TrainingConfig tc;
  tc.epochs = 150;
  tc.batch_size = 1;
  tc.learning_rate = 1e-2;
  tc.final_learning_rate = 1e-3;
  const TrainingReport report = train_source(model, corpus, tc);
  CHECK_FALSE(report.diverged);
  CHECK(report.epoch_loss.size() == 150u);
  CHECK(report.epoch_loss.back() < 0.05);
  CHECK(decode_text(vocab, greedy_decode(model, corpus[0])) == *corpus[0].reference);
}

TEST_CASE("loss decreases over the first steps on a fixed batch") {
  const Vocabulary vocab = Vocabulary::reference();
  const auto corpus = make_synthetic_corpus(vocab, 4, {3, 12}, EmissionParams{}, 4);
  std::vector<const Utterance*> batch;
  for (const auto& u : corpus) batch.push_back(&u);
  for (const ModelMode mode : {ModelMode::frame_synchronous, ModelMode::autoregressive}) {
    AcousticModel model(ModelDims{}, vocab, mode, 2);
    AdamW opt;
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 10; ++step) {
      const double loss = train_step(model, batch, opt, 1e-3, 5.0);
      CHECK(loss < prev);
      prev = loss;
    }
  }
}

TEST_CASE("training is reproducible and float-rounded") {
  const Vocabulary vocab = Vocabulary::reference();
  const auto corpus = make_synthetic_corpus(vocab, 6, {3, 10}, EmissionParams{}, 5);
  TrainingConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.seed = 9;
  AcousticModel a(ModelDims{}, vocab, ModelMode::autoregressive, 9);
  AcousticModel b(ModelDims{}, vocab, ModelMode::autoregressive, 9);
  train_source(a, corpus, tc);
  train_source(b, corpus, tc);
  CHECK(a.params().bit_equal(b.params()));
  AcousticModel rounded = a;
  rounded.round_to_float();
  CHECK(rounded.params().bit_equal(a.params()));

  tc.epochs = 0;
  AcousticModel fresh(ModelDims{}, vocab, ModelMode::frame_synchronous, 4);
  AcousticModel init = fresh;
  init.round_to_float();
  const TrainingReport none = train_source(fresh, corpus, tc);
  CHECK(none.steps == 0);
  CHECK(fresh.params().bit_equal(init.params()));
}

TEST_CASE("supervised loss requires a reference") {
  const AcousticModel model(ModelDims{}, Vocabulary::reference(), ModelMode::frame_synchronous, 0);
  Rng rng(3);
  CHECK_THROWS_AS((void)supervised_loss(model, random_utterance(rng, 10, 16), nullptr), Error);
}
