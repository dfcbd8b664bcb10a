#pragma once

#include "sgem/acoustic.hpp"
#include "sgem/config.hpp"
#include "sgem/core.hpp"
#include "sgem/lm.hpp"

#include <iosfwd>
#include <vector>

namespace sgem {

/// Merge consecutive repeats, then drop blanks.
TokenSequence ctc_collapse(const TokenSequence& frames, const Vocabulary& vocab);

/// Row-wise argmax (lowest index on ties) followed by ctc_collapse.
TokenSequence greedy_decode(const LogitMatrix& logits, const Vocabulary& vocab);

/// Frame-synchronous: greedy_decode of forward_frames. Autoregressive:
/// repeated argmax of the next-token distribution until end-of-sequence or
/// max_decode_length().
TokenSequence greedy_decode(const AcousticModel& model, const Utterance& utt);

/// Upper bound on autoregressive output length: twice the encoder length.
int max_decode_length(const AcousticModel& model, const Utterance& utt);

/// Optional per-step beam trace sink.
struct BeamTrace {
  std::ostream* out = nullptr;
};

/// CTC beam search with shallow fusion over a (possibly unnormalized) logit
/// matrix.
///
/// Hypotheses are CTC lattice states: a collapsed prefix plus whether its
/// last frame was blank. Alignment probabilities of identical states are
/// summed; each frame keeps the best `beam_width` states ranked by
/// am + lambda_lm * lm (ties: shorter / lexicographically smaller prefix).
/// Extending a prefix by a token adds log p_LM(token | prefix). At the end,
/// the two states of each surviving prefix are merged and, when an LM is
/// present, log p_LM(</s> | prefix) is added before the final ranking.
/// `lm` may be null, which is equivalent to lambda_lm = 0.
Hypothesis ctc_beam_search(const LogitMatrix& logits, const Vocabulary& vocab, const NGramLM* lm,
                           int beam_width, double lambda_lm, BeamTrace trace = {});

/// Step-synchronous beam search over the decoder with the same fusion rule.
/// Only sequences, scores and decoder states are retained.
Hypothesis ar_beam_search(const AcousticModel& model, const Utterance& utt, const NGramLM* lm,
                          int beam_width, double lambda_lm, BeamTrace trace = {});

/// Dispatches on model mode.
Hypothesis beam_search(const AcousticModel& model, const NGramLM* lm, const Utterance& utt,
                       int beam_width, double lambda_lm, BeamTrace trace = {});

/// Viterbi path over the CTC lattice of `target`; entries are token ids or
/// blank, one per frame.
TokenSequence forced_align(const LogitMatrix& logits, const TokenSequence& target, const Vocabulary& vocab);

/// Minimum number of frames a CTC alignment of `target` needs.
int min_alignment_frames(const TokenSequence& target);

enum class AcquisitionKind { frame_level, aligned_frames, teacher_forced, fallback_frame_level };

/// Logits the adaptation losses consume, with the forward record needed for
/// backpropagation.
struct Acquisition {
  ForwardRecord record;  // record.logits are the acquired logits
  RowMask mask;          // rows that may contribute to losses
  TokenSequence hypothesis;
  AcquisitionKind kind = AcquisitionKind::frame_level;
  bool fallback = false;

  [[nodiscard]] const LogitMatrix& logits() const { return record.logits; }
};

/// Without beam search: frame logits, every row masked in. With beam search:
/// autoregressive models teacher-force the best hypothesis (|y| rows);
/// frame-synchronous models keep the frames its forced alignment labels
/// non-blank. An empty hypothesis falls back to frame logits with blank-argmax
/// masking.
Acquisition acquire_logits(const AcousticModel& model, const NGramLM* lm, const Utterance& utt,
                           const AdaptationConfig& config);

/// Recomputes logits for a fixed hypothesis (reacquire_every_step = false).
Acquisition reacquire_fixed(const AcousticModel& model, const Utterance& utt, const Acquisition& first);

}  // namespace sgem
