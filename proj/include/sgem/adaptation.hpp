#pragma once

#include "sgem/acoustic.hpp"
#include "sgem/config.hpp"
#include "sgem/lm.hpp"
#include "sgem/objectives.hpp"

#include <string>
#include <vector>

namespace sgem {

enum class DecodeMode { greedy, beam };

DecodeMode parse_decode_mode(const std::string& text);
std::string to_string(DecodeMode mode);

/// Inference transcript: greedy decoding, or beam search with shallow fusion
/// using the config's beam width and LM weight.
std::string transcribe(const AcousticModel& model, const NGramLM* lm, const Utterance& utt,
                       const AdaptationConfig& config, DecodeMode mode);

struct AdaptationResult {
  std::string utterance_id;
  std::string transcript_before;
  std::string transcript_after;
  std::vector<LossBreakdown> loss_trajectory;  // one entry per step
  std::vector<double> lr_schedule;             // learning rate of each step
  int skipped_steps = 0;                       // all-masked or non-finite
  bool fallback_used = false;
  double wall_time = 0.0;  // seconds

  /// Equality of every field except wall_time.
  [[nodiscard]] bool same_outcome(const AdaptationResult& other) const;
};

/// Episodic adaptation of one utterance. The model is restored to its
/// entry parameters before returning, also when an exception escapes.
AdaptationResult adapt_utterance(AcousticModel& model, const NGramLM* lm, const Utterance& utt,
                                 const AdaptationConfig& config, DecodeMode mode = DecodeMode::greedy);

/// Adapts every utterance on `jobs` worker threads, each with its own model
/// copy. Results are in input order.
std::vector<AdaptationResult> run_corpus(const AcousticModel& model, const NGramLM* lm,
                                         const std::vector<Utterance>& corpus,
                                         const AdaptationConfig& config, DecodeMode mode, int jobs = 1);

struct CorpusScore {
  double wer = 0.0;
  long edits = 0;
  long reference_words = 0;
  std::vector<std::string> hypotheses;
};

/// Corpus WER of the unadapted model. Throws if an utterance lacks a
/// reference.
CorpusScore evaluate(const AcousticModel& model, const NGramLM* lm, const std::vector<Utterance>& corpus,
                     const AdaptationConfig& config, DecodeMode mode);

/// Corpus WER of the adapted transcripts.
CorpusScore score_results(const std::vector<Utterance>& corpus, const std::vector<AdaptationResult>& results,
                          bool adapted);

struct AblationRow {
  bool beam_search = false;
  bool gem = false;
  bool ns = false;
  double wer = 0.0;
};

/// The six toggle rows (BS, GEM, NS): unadapted, GEM, NS, GEM+NS, BS+NS,
/// BS+GEM+NS. The unadapted row is evaluate() of the frozen model.
std::vector<AblationRow> run_ablation(const AcousticModel& model, const NGramLM* lm,
                                      const std::vector<Utterance>& corpus, const AdaptationConfig& base,
                                      DecodeMode mode, int jobs = 1);

}  // namespace sgem
