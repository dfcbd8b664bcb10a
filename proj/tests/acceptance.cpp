// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include "sgem/adaptation.hpp"
#include "sgem/corpus.hpp"
#include "sgem/decoding.hpp"
#include "sgem/objectives.hpp"
#include "sgem/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>

using namespace sgem;
using namespace sgem::test;

namespace {

// Tolerances and gates.
constexpr double kClosedFormTol = 1e-9;
constexpr double kRenyiHalfTol = 1e-12;
constexpr double kShannonLimitTol = 1e-3;
constexpr double kFiniteDifferenceStep = 1e-4;
constexpr double kGradientRelTol = 1e-3;
constexpr double kGradientFloor = 1e-6;  // relative-error denominator floor
constexpr double kBeamScoreTol = 1e-9;
constexpr double kAlignmentSlack = 1e-12;
constexpr double kSnrTolDb = 0.01;
constexpr double kCleanWerGate = 0.15;
constexpr double kRelativeReductionGate = 0.05;

const std::filesystem::path kAssets = SGEM_ASSET_DIR;
const std::filesystem::path kConfigFile = SGEM_CONFIG_FILE;
const Vocabulary kVocab = Vocabulary::reference();

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

AdaptationConfig shipped_config() { return load_config(kConfigFile); }

// ─── 1 ──────────────────────────────────────────────────────────────────────

Outcome closed_forms() {
  Rng rng(101);
  double worst_uniform = 0.0, worst_hot = 0.0;
  for (int n = 0; n < 50; ++n) {
    const int C = rng.integer(2, 60), L = rng.integer(1, 20);
    // Orders above 1 as published; below 1 the probability floor adds
    // (C - 1) * floor^alpha to the one-hot value.
    const double alpha = rng.uniform(1.05, 4.0);
    const LogitMatrix uniform{Matrix::Constant(L, C, rng.uniform(-5.0, 5.0)), false};
    worst_uniform = std::max(
        worst_uniform, std::abs(gem_loss(uniform, all_rows(L), alpha, rng.uniform(0.5, 3.0)).value - std::log(C)));
    Matrix hot = Matrix::Constant(L, C, -1000.0);
    for (int i = 0; i < L; ++i) hot(i, rng.integer(0, C - 1)) = 0.0;
    worst_hot = std::max(worst_hot, std::abs(gem_loss(LogitMatrix{hot, false}, all_rows(L), alpha, 1.0).value));
  }
  RowVector half(2);
  half << 0.5, 0.5;
  const double half_err = std::abs(renyi_entropy(half, 2.0) - std::log(2.0));
  return {worst_uniform < kClosedFormTol && worst_hot < kClosedFormTol && half_err < kRenyiHalfTol,
          "uniform err " + num(worst_uniform) + ", one-hot err " + num(worst_hot) + ", (0.5,0.5) err " +
              num(half_err)};
}

// ─── 2 ──────────────────────────────────────────────────────────────────────

Outcome shannon_limit() {
  Rng rng(102);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const int C = rng.integer(2, 50);
    RowVector p(C);
    for (int j = 0; j < C; ++j) p[j] = -std::log(1.0 - rng.uniform());
    p /= p.sum();
    worst = std::max(worst, std::abs(renyi_entropy(p, 1.001) - shannon_entropy(p)));
  }
  return {worst < kShannonLimitTol, "max |H_1.001 - H| = " + num(worst) + " over 100 distributions"};
}

// ─── 3 ──────────────────────────────────────────────────────────────────────

Outcome gradient_checks() {
  Rng rng(103);
  double worst_logits = 0.0;
  for (int n = 0; n < 20; ++n) {
    LogitMatrix r = random_logits(rng, 5, 6);
    AdaptationConfig c;
    c.alpha = n % 2 ? 1.5 : rng.uniform(0.5, 3.0);
    if (std::abs(c.alpha - 1.0) < 1e-2) c.alpha = 2.0;
    c.lambda_ns = rng.uniform(0.0, 2.0);
    c.tau_scale = 0.9;
    const RowMask mg = n % 3 ? blank_argmax_mask(r, 0) : all_rows(5);
    const RowMask mn = all_rows(5);
    const Matrix neg = negative_classes(r, c.tau(6));
    Matrix grad;
    combined_loss(r, mg, mn, neg, c, &grad);
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
      const double numeric = central_difference([&] { return combined_loss(r, mg, mn, neg, c).total; },
                                                r.values.data()[i], kFiniteDifferenceStep);
      worst_logits = std::max(worst_logits, relative_error(grad.data()[i], numeric, kGradientFloor));
    }
  }

  AcousticModel model(ModelDims{}, kVocab, ModelMode::frame_synchronous, 7);
  const Utterance utt = random_utterance(rng, 24, 16);
  const AdaptationConfig config;
  const ForwardRecord base = model.forward_frames_record(utt);
  const RowMask mg = blank_argmax_mask(base.logits, 0);
  const RowMask mn = all_rows(base.logits.rows());
  const Matrix neg = negative_classes(base.logits, config.tau(kVocab.size()));
  Matrix d_logits;
  combined_loss(base.logits, mg, mn, neg, config, &d_logits);
  const GradientResult g = model.backward(base, d_logits, model.group_names());
  const auto loss = [&] { return combined_loss(model.forward_frames_record(utt).logits, mg, mn, neg, config).total; };

  struct Slot {
    std::string group, array;
    Eigen::Index index;
  };
  std::vector<Slot> slots;
  model.params().for_each([&](const std::string& group, const std::string& array, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) slots.push_back({group, array, i});
  });
  double worst_params = 0.0;
  for (int n = 0; n < 50; ++n) {
    const Slot& s = slots[static_cast<std::size_t>(rng.integer(0, static_cast<int>(slots.size()) - 1))];
    double& x = model.params().at(s.group, s.array).data()[s.index];
    const double numeric = central_difference(loss, x, kFiniteDifferenceStep);
    worst_params = std::max(worst_params,
                            relative_error(g.grads.at(s.group, s.array).data()[s.index], numeric, kGradientFloor));
  }
  return {worst_logits < kGradientRelTol && worst_params < kGradientRelTol,
          "logits max rel err " + num(worst_logits) + ", 50 parameters max rel err " + num(worst_params)};
}

// ─── 4 ──────────────────────────────────────────────────────────────────────

Outcome decoder_oracles() {
  Rng rng(104);
  int greedy_mismatch = 0;
  for (int n = 0; n < 500; ++n) {
    const int C = rng.integer(2, 14);
    const Vocabulary v = tiny_vocabulary(C);
    const LogitMatrix r = random_logits(rng, rng.integer(1, 40), C);
    if (ctc_beam_search(r, v, nullptr, 1, 0.0).sequence != greedy_decode(r, v)) ++greedy_mismatch;
  }
  int instances = 0, seq_mismatch = 0;
  double worst_score = 0.0;
  for (int C = 2; C <= 4; ++C) {
    const Vocabulary v = tiny_vocabulary(C);
    for (int L = 1; L <= 5; ++L) {
      const int width = static_cast<int>(std::pow(C, L));
      for (int n = 0; n < 20; ++n) {
        const LogitMatrix r = random_logits(rng, L, C, 2.0);
        const NGramLM lm = random_lm(rng, v, rng.integer(1, 3));
        const bool fused = n % 2 == 1;
        const double lambda = fused ? rng.uniform(0.1, 2.0) : 0.0;
        const Hypothesis oracle = exhaustive_search(r, v, fused ? &lm : nullptr, lambda);
        const Hypothesis got = ctc_beam_search(r, v, fused ? &lm : nullptr, width, lambda);
        ++instances;
        if (got.sequence != oracle.sequence) ++seq_mismatch;
        worst_score = std::max(worst_score, std::abs(got.fused_score - oracle.fused_score));
      }
    }
  }
  return {greedy_mismatch == 0 && seq_mismatch == 0 && worst_score < kBeamScoreTol,
          "B=1 vs greedy mismatches " + std::to_string(greedy_mismatch) + "/500, exhaustive mismatches " +
              std::to_string(seq_mismatch) + "/" + std::to_string(instances) + ", max score err " +
              num(worst_score)};
}

// ─── 5 ──────────────────────────────────────────────────────────────────────

Outcome forced_alignment() {
  Rng rng(105);
  int collapse_failures = 0, dominated = 0, sampled = 0;
  for (int n = 0; n < 200; ++n) {
    const int C = rng.integer(2, 14);
    const Vocabulary v = tiny_vocabulary(C);
    TokenSequence target;
    const int len = rng.integer(1, 8);
    for (int i = 0; i < len; ++i) target.ids.push_back(rng.integer(1, C - 1));
    const int L = 2 * len + 1 + rng.integer(0, 10);
    const LogitMatrix r = random_logits(rng, L, C);
    const TokenSequence path = forced_align(r, target, v);
    if (ctc_collapse(path, v) != target) ++collapse_failures;
    const double best = path_score(r, path.ids);
    for (int k = 0; k < 5; ++k) {
      const auto p = random_alignment(rng, target, L);
      if (ctc_collapse(TokenSequence{p}, v) != target) continue;
      ++sampled;
      if (path_score(r, p) > best + kAlignmentSlack) ++dominated;
    }
  }
  return {collapse_failures == 0 && dominated == 0 && sampled == 1000,
          "collapse failures " + std::to_string(collapse_failures) + "/200, sampled paths scoring higher " +
              std::to_string(dominated) + "/" + std::to_string(sampled)};
}

// ─── 6 ──────────────────────────────────────────────────────────────────────

Outcome episodic_reset(const AcousticModel& shipped, const NGramLM& lm, const std::vector<Utterance>& shifted) {
  const AdaptationConfig config = shipped_config();
  const std::vector<Utterance> subset(shifted.begin(), shifted.begin() + 40);
  AcousticModel model = shipped;
  const ParameterSet entry = model.params();
  int changed = 0;
  for (const auto& utt : subset) {
    (void)adapt_utterance(model, &lm, utt, config);
    if (!model.params().bit_equal(entry)) ++changed;
  }
  std::vector<std::size_t> order(subset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(106);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<int>(i) - 1))]);
  std::vector<Utterance> permuted;
  for (std::size_t i : order) permuted.push_back(subset[i]);
  const auto a = run_corpus(shipped, &lm, subset, config, DecodeMode::greedy, 1);
  const auto b = run_corpus(shipped, &lm, permuted, config, DecodeMode::greedy, 2);
  int differ = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!a[order[k]].same_outcome(b[k])) ++differ;
  }
  return {changed == 0 && differ == 0, "parameters not restored " + std::to_string(changed) +
                                           "/40, results changed by permutation " + std::to_string(differ) + "/40"};
}

// ─── 7 ──────────────────────────────────────────────────────────────────────

Outcome snr_mixing(const std::vector<Utterance>& clean) {
  Rng rng(107);
  double worst = 0.0;
  for (const double snr : {0.0, 10.0, 20.0}) {
    for (int n = 0; n < 30; ++n) {
      const Matrix& s = clean[static_cast<std::size_t>(n)].features;
      const Matrix noise = n % 2 ? noise_texture(n % kNoiseTextureCount, rng.integer(1, 80), 16)
                                 : random_scores(rng, rng.integer(1, 80), 16, 2.0);
      const Matrix mixed = mix_at_snr(s, noise, snr);
      worst = std::max(worst, std::abs(measured_snr_db(s, mixed - s) - snr));
    }
  }
  return {worst < kSnrTolDb, "max |measured - requested| = " + num(worst) + " dB"};
}

// ─── 8 ──────────────────────────────────────────────────────────────────────

Outcome end_to_end(const AcousticModel& shipped, const NGramLM& lm, const std::vector<Utterance>& clean,
                   const std::vector<Utterance>& shifted) {
  // Same recipe as scripts/build_reference_assets.sh.
  const auto train = make_synthetic_corpus(kVocab, 2000, {}, EmissionParams{}, 1);
  AcousticModel model(ModelDims{}, kVocab, ModelMode::frame_synchronous, 1);
  TrainingConfig tc;
  tc.seed = 1;
  const TrainingReport report = train_source(model, train, tc);
  const bool matches_shipped = model.params().bit_equal(shipped.params());

  const AdaptationConfig config = shipped_config();
  const double clean_wer = evaluate(model, &lm, clean, config, DecodeMode::greedy).wer;
  const auto results = run_corpus(model, &lm, shifted, config, DecodeMode::greedy, 1);
  const double before = score_results(shifted, results, false).wer;
  const double after = score_results(shifted, results, true).wer;
  const double reduction = before > 0.0 ? (before - after) / before : 0.0;
  const auto rows = run_ablation(model, &lm, shifted, config, DecodeMode::greedy, 1);
  const double unadapted = rows.front().wer, full = rows.back().wer;

  const bool pass = !report.diverged && clean_wer <= kCleanWerGate && shifted.size() >= 100 &&
                    reduction >= kRelativeReductionGate && full <= unadapted;
  return {pass, "clean WER " + num(clean_wer) + ", shifted WER " + num(before) + " -> " + num(after) +
                    " (relative " + num(reduction) + "), ablation full " + num(full) + " vs unadapted " +
                    num(unadapted) + ", retrained model " + (matches_shipped ? "matches" : "differs from") +
                    " shipped checkpoint"};
}

// ─── 9 ──────────────────────────────────────────────────────────────────────

Outcome no_update_runs(const AcousticModel& shipped, const NGramLM& lm, const std::vector<Utterance>& shifted) {
  const std::vector<Utterance> subset(shifted.begin(), shifted.begin() + 50);
  AdaptationConfig zero = shipped_config();
  zero.N = 0;
  AdaptationConfig off = shipped_config();
  off.use_gem = false;
  off.use_ns = false;
  int mismatches = 0, runs = 0;
  for (const auto* config : {&zero, &off}) {
    for (const DecodeMode mode : {DecodeMode::greedy, DecodeMode::beam}) {
      for (const auto& r : run_corpus(shipped, &lm, subset, *config, mode, 1)) {
        ++runs;
        if (r.transcript_after != r.transcript_before) ++mismatches;
      }
    }
  }
  return {mismatches == 0, "changed transcripts " + std::to_string(mismatches) + "/" + std::to_string(runs)};
}

// ─── 10 ─────────────────────────────────────────────────────────────────────

Outcome wer_metric() {
  const double third = wer("a b c", "a x c");
  const double inserted = wer("a", "a b c d");
  return {third == 1.0 / 3.0 && inserted == 3.0, "\"a b c\"/\"a x c\" = " + num(third) + ", \"a\"/\"a b c d\" = " +
                                                      num(inserted)};
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& run) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!out.pass) ++failed;
    std::cout << (out.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << out.detail << " ["
              << num(secs) << " s]" << std::endl;
  };

  const AcousticModel shipped = load_checkpoint(kAssets / "source_ctc.ckpt", kVocab);
  const NGramLM lm = NGramLM::load(kAssets / "lm4.txt", kVocab);
  const auto clean = load_corpus(kAssets / "test_clean" / "manifest.jsonl");
  const auto shifted = load_corpus(kAssets / "test_shifted" / "manifest.jsonl");

  report(1, "loss closed forms", closed_forms);
  report(2, "Shannon limit", shannon_limit);
  report(3, "gradient correctness", gradient_checks);
  report(4, "decoder oracles", decoder_oracles);
  report(5, "forced alignment", forced_alignment);
  report(6, "episodic reset", [&] { return episodic_reset(shipped, lm, shifted); });
  report(7, "SNR mixing", [&] { return snr_mixing(clean); });
  report(8, "end-to-end synthetic analogue", [&] { return end_to_end(shipped, lm, clean, shifted); });
  report(9, "no-update runs", [&] { return no_update_runs(shipped, lm, shifted); });
  report(10, "WER metric", wer_metric);

  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << " in "
            << num(total) << " s" << std::endl;
  return failed == 0 ? 0 : 1;
}
