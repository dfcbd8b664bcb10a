#include "sgem/adaptation.hpp"

#include "sgem/corpus.hpp"
#include "sgem/decoding.hpp"
#include "sgem/optim.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

namespace sgem {
namespace {

class RestoreGuard {
 public:
  explicit RestoreGuard(AcousticModel& model) : model_(model), snapshot_(model.snapshot()) {}
  ~RestoreGuard() { model_.restore(snapshot_); }
  RestoreGuard(const RestoreGuard&) = delete;
  RestoreGuard& operator=(const RestoreGuard&) = delete;

 private:
  AcousticModel& model_;
  ModelSnapshot snapshot_;
};

bool same_breakdown(const LossBreakdown& a, const LossBreakdown& b) {
  return a.gem == b.gem && a.ns == b.ns && a.total == b.total && a.lambda_ns == b.lambda_ns &&
         a.frames_used == b.frames_used && a.masked_frames == b.masked_frames &&
         a.gem_all_masked == b.gem_all_masked && a.ns_all_masked == b.ns_all_masked;
}

RowMask loss_mask(const Acquisition& acq, bool blank_mask, int blank) {
  if (blank_mask && acq.kind == AcquisitionKind::frame_level) {
    return mask_and(acq.mask, blank_argmax_mask(acq.logits(), blank));
  }
  return acq.mask;
}

const std::string& reference_of(const Utterance& utt) {
  if (!utt.reference) throw Error("utterance '" + utt.id + "' has no reference");
  return *utt.reference;
}

}  // namespace

DecodeMode parse_decode_mode(const std::string& text) {
  if (text == "greedy") return DecodeMode::greedy;
  if (text == "beam") return DecodeMode::beam;
  throw Error("unknown decode mode '" + text + "' (expected greedy or beam)");
}

std::string to_string(DecodeMode mode) { return mode == DecodeMode::greedy ? "greedy" : "beam"; }

std::string transcribe(const AcousticModel& model, const NGramLM* lm, const Utterance& utt,
                       const AdaptationConfig& config, DecodeMode mode) {
  const TokenSequence seq = mode == DecodeMode::greedy
                                ? greedy_decode(model, utt)
                                : beam_search(model, lm, utt, config.beam_width, config.lambda_lm).sequence;
  return decode_text(model.vocab(), seq);
}

bool AdaptationResult::same_outcome(const AdaptationResult& other) const {
  if (utterance_id != other.utterance_id || transcript_before != other.transcript_before ||
      transcript_after != other.transcript_after || lr_schedule != other.lr_schedule ||
      skipped_steps != other.skipped_steps || fallback_used != other.fallback_used ||
      loss_trajectory.size() != other.loss_trajectory.size()) {
    return false;
  }
  for (std::size_t i = 0; i < loss_trajectory.size(); ++i) {
    if (!same_breakdown(loss_trajectory[i], other.loss_trajectory[i])) return false;
  }
  return true;
}

AdaptationResult adapt_utterance(AcousticModel& model, const NGramLM* lm, const Utterance& utt,
                                 const AdaptationConfig& config, DecodeMode mode) {
  validate_config(config, true);
  check_utterance(model.vocab(), utt);
  const auto start = std::chrono::steady_clock::now();
  AdaptationResult result;
  result.utterance_id = utt.id;
  result.transcript_before = transcribe(model, lm, utt, config, mode);
  const bool idle = !config.use_gem && !config.use_ns;
  const int blank = model.vocab().blank_index();
  {
    RestoreGuard guard(model);
    AdamW optimizer;
    Acquisition first;
    for (int t = 0; t < config.N; ++t) {
      const double lr = cosine_lr(t, config.eta_i, config.eta_f, config.N);
      result.lr_schedule.push_back(lr);
      if (idle) {
        LossBreakdown none;
        none.lambda_ns = config.lambda_ns;
        result.loss_trajectory.push_back(none);
        ++result.skipped_steps;
        continue;
      }
      Acquisition acq = (t == 0 || config.reacquire_every_step) ? acquire_logits(model, lm, utt, config)
                                                                : reacquire_fixed(model, utt, first);
      result.fallback_used = result.fallback_used || acq.fallback;
      const RowMask mask_gem = loss_mask(acq, config.blank_mask_gem, blank);
      const RowMask mask_ns = loss_mask(acq, config.blank_mask_ns, blank);
      Matrix d_logits;
      const LossBreakdown loss = combined_loss(acq.logits(), mask_gem, mask_ns, config, &d_logits);
      result.loss_trajectory.push_back(loss);
      bool applied = false;
      if (loss.frames_used > 0) {
        const GradientResult g = model.backward(acq.record, d_logits, config.trainable_groups);
        applied = !g.zero_gradient && optimizer.step(model.params(), g.grads, lr, config.weight_decay);
      }
      if (!applied) ++result.skipped_steps;
      if (t == 0) first = std::move(acq);
    }
    result.transcript_after = idle ? result.transcript_before : transcribe(model, lm, utt, config, mode);
  }
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<AdaptationResult> run_corpus(const AcousticModel& model, const NGramLM* lm,
                                         const std::vector<Utterance>& corpus,
                                         const AdaptationConfig& config, DecodeMode mode, int jobs) {
  validate_config(config, true);
  std::vector<AdaptationResult> results(corpus.size());
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(corpus.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    AcousticModel local = model;
    for (std::size_t i = next++; i < corpus.size(); i = next++) {
      try {
        results[i] = adapt_utterance(local, lm, corpus[i], config, mode);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = corpus.size();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

CorpusScore evaluate(const AcousticModel& model, const NGramLM* lm, const std::vector<Utterance>& corpus,
                     const AdaptationConfig& config, DecodeMode mode) {
  CorpusScore score;
  ErrorCounter counter;
  for (const auto& utt : corpus) {
    const std::string& ref = reference_of(utt);
    score.hypotheses.push_back(transcribe(model, lm, utt, config, mode));
    counter.add(ref, score.hypotheses.back());
  }
  score.edits = counter.edits;
  score.reference_words = counter.reference_words;
  score.wer = counter.rate();
  return score;
}

CorpusScore score_results(const std::vector<Utterance>& corpus, const std::vector<AdaptationResult>& results,
                          bool adapted) {
  if (corpus.size() != results.size()) throw Error("result count does not match corpus size");
  CorpusScore score;
  ErrorCounter counter;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string& hyp = adapted ? results[i].transcript_after : results[i].transcript_before;
    counter.add(reference_of(corpus[i]), hyp);
    score.hypotheses.push_back(hyp);
  }
  score.edits = counter.edits;
  score.reference_words = counter.reference_words;
  score.wer = counter.rate();
  return score;
}

std::vector<AblationRow> run_ablation(const AcousticModel& model, const NGramLM* lm,
                                      const std::vector<Utterance>& corpus, const AdaptationConfig& base,
                                      DecodeMode mode, int jobs) {
  static constexpr bool kRows[6][3] = {
      {false, false, false}, {false, true, false}, {false, false, true},
      {false, true, true},   {true, false, true},  {true, true, true},
  };
  std::vector<AblationRow> rows;
  for (const auto& toggles : kRows) {
    AblationRow row{toggles[0], toggles[1], toggles[2], 0.0};
    if (!row.gem && !row.ns) {
      row.wer = evaluate(model, lm, corpus, base, mode).wer;
    } else {
      AdaptationConfig config = base;
      config.use_beam_search = row.beam_search;
      config.use_gem = row.gem;
      config.use_ns = row.ns;
      row.wer = score_results(corpus, run_corpus(model, lm, corpus, config, mode, jobs), true).wer;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sgem
