#include "sgem/decoding.hpp"

#include "sgem/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

namespace sgem {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void write_sequence(std::ostream& out, const std::vector<int>& ids) {
  out << '[';
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << ids[i];
  out << ']';
}

// ─── CTC lattice-state beam ──────────────────────────────────────────────────

struct CtcKey {
  std::vector<int> prefix;
  bool ends_label = false;  // false: last frame was blank
  auto operator<=>(const CtcKey&) const = default;
};

struct CtcState {
  double am = kNegInf;
  double lm = 0.0;
};

struct Ranked {
  const CtcKey* key;
  double fused;
};

}  // namespace

TokenSequence ctc_collapse(const TokenSequence& frames, const Vocabulary& vocab) {
  TokenSequence out;
  int prev = -1;
  for (int id : frames.ids) {
    if (id != prev && id != vocab.blank_index()) out.ids.push_back(id);
    prev = id;
  }
  return out;
}

TokenSequence greedy_decode(const LogitMatrix& logits, const Vocabulary& vocab) {
  if (logits.cols() != vocab.size()) throw Error("vocabulary size mismatch");
  TokenSequence frames;
  frames.ids.reserve(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) frames.ids.push_back(argmax(logits.values.row(i)));
  return ctc_collapse(frames, vocab);
}

int max_decode_length(const AcousticModel& model, const Utterance& utt) {
  return 2 * model.output_frames(utt.frames());
}

TokenSequence greedy_decode(const AcousticModel& model, const Utterance& utt) {
  if (model.mode() == ModelMode::frame_synchronous) {
    return greedy_decode(model.forward_frames(utt), model.vocab());
  }
  const ForwardRecord enc = model.encode(utt);
  const int end = model.vocab().blank_index();
  const int max_len = max_decode_length(model, utt);
  DecoderState state = model.initial_state();
  TokenSequence out;
  int prev = end;
  while (static_cast<int>(out.size()) < max_len) {
    const int next = argmax(model.step(enc, state, prev));
    if (next == end) break;
    out.ids.push_back(next);
    prev = next;
  }
  return out;
}

Hypothesis ctc_beam_search(const LogitMatrix& logits, const Vocabulary& vocab, const NGramLM* lm,
                           int beam_width, double lambda_lm, BeamTrace trace) {
  if (beam_width < 1) throw Error("beam width must be at least 1");
  if (logits.cols() != vocab.size()) throw Error("vocabulary size mismatch");
  if (lm && lm->vocab_size() != vocab.size()) throw Error("vocabulary size mismatch");
  if (!lm) lambda_lm = 0.0;
  const int blank = vocab.blank_index();
  const int C = vocab.size();

  std::map<CtcKey, CtcState> beam;
  beam[CtcKey{}] = CtcState{0.0, 0.0};

  auto fused = [&](const CtcState& s) { return s.am + lambda_lm * s.lm; };

  for (int t = 0; t < logits.rows(); ++t) {
    const auto row = logits.values.row(t);
    std::map<CtcKey, CtcState> next;
    auto add = [&](CtcKey key, double am, double lm_score) {
      auto [it, inserted] = next.try_emplace(std::move(key), CtcState{am, lm_score});
      if (!inserted) it->second.am = log_add_exp(it->second.am, am);
    };
    for (const auto& [key, state] : beam) {
      add(CtcKey{key.prefix, false}, state.am + row[blank], state.lm);
      const RowVector* lm_row = lm ? &lm->score_next(std::span<const int>(key.prefix)) : nullptr;
      for (int c = 0; c < C; ++c) {
        if (c == blank) continue;
        if (key.ends_label && !key.prefix.empty() && key.prefix.back() == c) {
          add(CtcKey{key.prefix, true}, state.am + row[c], state.lm);
          continue;
        }
        CtcKey extended{key.prefix, true};
        extended.prefix.push_back(c);
        add(std::move(extended), state.am + row[c], state.lm + (lm_row ? (*lm_row)[c] : 0.0));
      }
    }

    std::vector<Ranked> ranked;
    ranked.reserve(next.size());
    for (const auto& [key, state] : next) ranked.push_back({&key, fused(state)});
    // map order is the key order, so a stable sort keeps the tie rule
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Ranked& a, const Ranked& b) { return a.fused > b.fused; });
    if (static_cast<int>(ranked.size()) > beam_width) ranked.resize(static_cast<std::size_t>(beam_width));

    std::map<CtcKey, CtcState> kept;
    for (const auto& r : ranked) kept.emplace(*r.key, next.at(*r.key));
    beam = std::move(kept);

    if (trace.out) {
      *trace.out << "step " << t;
      for (const auto& r : ranked) {
        const CtcState& s = beam.at(*r.key);
        *trace.out << ' ';
        write_sequence(*trace.out, r.key->prefix);
        *trace.out << (r.key->ends_label ? "n" : "b") << " am=" << s.am << " lm=" << s.lm
                   << " fused=" << r.fused;
      }
      *trace.out << '\n';
    }
  }

  std::map<std::vector<int>, CtcState> merged;
  for (const auto& [key, state] : beam) {
    auto [it, inserted] = merged.try_emplace(key.prefix, state);
    if (!inserted) it->second.am = log_add_exp(it->second.am, state.am);
  }
  Hypothesis best;
  bool have = false;
  for (auto& [prefix, state] : merged) {
    const double lm_total = state.lm + (lm ? lm->score_end(std::span<const int>(prefix)) : 0.0);
    const double f = state.am + lambda_lm * lm_total;
    if (!have || f > best.fused_score) {
      best = Hypothesis{TokenSequence{prefix}, state.am, lm_total, f, lambda_lm};
      have = true;
    }
  }
  return best;
}

Hypothesis ar_beam_search(const AcousticModel& model, const Utterance& utt, const NGramLM* lm,
                          int beam_width, double lambda_lm, BeamTrace trace) {
  if (beam_width < 1) throw Error("beam width must be at least 1");
  if (model.mode() != ModelMode::autoregressive) throw Error("ar_beam_search requires an autoregressive model");
  if (lm && lm->vocab_size() != model.vocab().size()) throw Error("vocabulary size mismatch");
  if (!lm) lambda_lm = 0.0;

  struct ArHyp {
    std::vector<int> seq;
    double am = 0.0;
    double lm = 0.0;
    DecoderState state;
    bool finished = false;
  };
  auto fused = [&](const ArHyp& h) { return h.am + lambda_lm * h.lm; };
  auto better = [&](const ArHyp& a, const ArHyp& b) {
    const double fa = fused(a), fb = fused(b);
    if (fa != fb) return fa > fb;
    return a.seq < b.seq;
  };

  const ForwardRecord enc = model.encode(utt);
  const int end = model.vocab().blank_index();
  const int C = model.vocab().size();
  const int max_len = max_decode_length(model, utt);

  std::vector<ArHyp> active{ArHyp{{}, 0.0, 0.0, model.initial_state(), false}};
  std::vector<ArHyp> finished;
  int step_index = 0;
  while (!active.empty() && static_cast<int>(active.front().seq.size()) < max_len) {
    std::vector<ArHyp> candidates;
    for (const ArHyp& h : active) {
      DecoderState state = h.state;
      const int prev = h.seq.empty() ? end : h.seq.back();
      const RowVector row = model.step(enc, state, prev);
      const RowVector* lm_row = lm ? &lm->score_next(std::span<const int>(h.seq)) : nullptr;
      for (int k = 0; k < C; ++k) {
        ArHyp cand{h.seq, h.am + row[k], h.lm + (lm_row ? (*lm_row)[k] : 0.0), state, k == end};
        if (k != end) cand.seq.push_back(k);
        candidates.push_back(std::move(cand));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), better);
    if (static_cast<int>(candidates.size()) > beam_width) candidates.resize(static_cast<std::size_t>(beam_width));

    active.clear();
    for (auto& c : candidates) (c.finished ? finished : active).push_back(std::move(c));

    if (trace.out) {
      *trace.out << "step " << step_index;
      for (const auto& c : candidates) {
        *trace.out << ' ';
        write_sequence(*trace.out, c.seq);
        *trace.out << (c.finished ? "$" : "") << " am=" << c.am << " lm=" << c.lm << " fused=" << fused(c);
      }
      *trace.out << '\n';
    }
    ++step_index;

    // Extensions only lower scores, so a finished leader cannot be overtaken.
    if (!finished.empty() && !active.empty()) {
      const auto best_done = std::min_element(finished.begin(), finished.end(), better);
      if (fused(*best_done) >= fused(active.front())) break;
    }
  }
  for (auto& h : active) finished.push_back(std::move(h));
  const auto best = std::min_element(finished.begin(), finished.end(), better);
  return Hypothesis{TokenSequence{best->seq}, best->am, best->lm, fused(*best), lambda_lm};
}

Hypothesis beam_search(const AcousticModel& model, const NGramLM* lm, const Utterance& utt,
                       int beam_width, double lambda_lm, BeamTrace trace) {
  if (beam_width < 1) throw Error("beam width must be at least 1");
  if (model.mode() == ModelMode::frame_synchronous) {
    return ctc_beam_search(model.forward_frames(utt), model.vocab(), lm, beam_width, lambda_lm, trace);
  }
  return ar_beam_search(model, utt, lm, beam_width, lambda_lm, trace);
}

int min_alignment_frames(const TokenSequence& target) {
  int frames = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target.ids[i] == target.ids[i - 1]) ++frames;
  }
  return frames;
}

TokenSequence forced_align(const LogitMatrix& logits, const TokenSequence& target, const Vocabulary& vocab) {
  check_sequence(vocab, target, true);
  if (logits.cols() != vocab.size()) throw Error("vocabulary size mismatch");
  const int L = logits.rows();
  if (min_alignment_frames(target) > L) throw Error("target infeasible for L frames");
  const int blank = vocab.blank_index();

  const int S = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> label(static_cast<std::size_t>(S), blank);
  for (std::size_t i = 0; i < target.size(); ++i) label[2 * i + 1] = target.ids[i];

  Matrix score = Matrix::Constant(L, S, kNegInf);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> from(L, S);
  from.setConstant(-1);
  score(0, 0) = logits.values(0, blank);
  if (S > 1) score(0, 1) = logits.values(0, label[1]);
  for (int t = 1; t < L; ++t) {
    for (int s = 0; s < S; ++s) {
      double best = score(t - 1, s);
      int arg = s;
      if (s >= 1 && score(t - 1, s - 1) > best) {
        best = score(t - 1, s - 1);
        arg = s - 1;
      }
      const int l = label[static_cast<std::size_t>(s)];
      if (s >= 2 && l != blank && l != label[static_cast<std::size_t>(s - 2)] && score(t - 1, s - 2) > best) {
        best = score(t - 1, s - 2);
        arg = s - 2;
      }
      if (best == kNegInf) continue;
      score(t, s) = best + logits.values(t, l);
      from(t, s) = arg;
    }
  }

  int s = S - 1;
  if (S > 1 && score(L - 1, S - 2) > score(L - 1, S - 1)) s = S - 2;
  if (score(L - 1, s) == kNegInf) throw Error("target infeasible for L frames");
  TokenSequence path;
  path.ids.resize(static_cast<std::size_t>(L));
  for (int t = L - 1; t >= 0; --t) {
    path.ids[static_cast<std::size_t>(t)] = label[static_cast<std::size_t>(s)];
    if (t > 0) s = from(t, s);
  }
  return path;
}

Acquisition acquire_logits(const AcousticModel& model, const NGramLM* lm, const Utterance& utt,
                           const AdaptationConfig& config) {
  const Vocabulary& vocab = model.vocab();
  const int blank = vocab.blank_index();
  Acquisition acq;

  if (model.mode() == ModelMode::frame_synchronous) {
    acq.record = model.forward_frames_record(utt);
    if (!config.use_beam_search) {
      acq.kind = AcquisitionKind::frame_level;
      acq.mask = all_rows(acq.record.logits.rows());
      acq.hypothesis = greedy_decode(acq.record.logits, vocab);
      return acq;
    }
    const Hypothesis best = ctc_beam_search(acq.record.logits, vocab, lm, config.beam_width, config.lambda_lm);
    acq.hypothesis = best.sequence;
    if (best.sequence.empty()) {
      acq.kind = AcquisitionKind::fallback_frame_level;
      acq.fallback = true;
      acq.mask = blank_argmax_mask(acq.record.logits, blank);
      return acq;
    }
    const TokenSequence path = forced_align(acq.record.logits, best.sequence, vocab);
    acq.kind = AcquisitionKind::aligned_frames;
    acq.mask.resize(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) acq.mask[i] = path.ids[i] != blank ? 1 : 0;
    return acq;
  }

  acq.hypothesis = config.use_beam_search
                       ? ar_beam_search(model, utt, lm, config.beam_width, config.lambda_lm).sequence
                       : greedy_decode(model, utt);
  if (acq.hypothesis.empty()) {
    acq.kind = AcquisitionKind::fallback_frame_level;
    acq.fallback = true;
    acq.record = model.teacher_force(utt, acq.hypothesis, true);
    acq.mask = blank_argmax_mask(acq.record.logits, blank);
    return acq;
  }
  acq.kind = AcquisitionKind::teacher_forced;
  acq.record = model.teacher_force(utt, acq.hypothesis, false);
  acq.mask = all_rows(acq.record.logits.rows());
  return acq;
}

Acquisition reacquire_fixed(const AcousticModel& model, const Utterance& utt, const Acquisition& first) {
  Acquisition acq;
  acq.kind = first.kind;
  acq.fallback = first.fallback;
  acq.hypothesis = first.hypothesis;
  acq.mask = first.mask;
  if (model.mode() == ModelMode::frame_synchronous) {
    acq.record = model.forward_frames_record(utt);
  } else {
    acq.record = model.teacher_force(utt, first.hypothesis, first.kind == AcquisitionKind::fallback_frame_level);
  }
  return acq;
}

}  // namespace sgem
