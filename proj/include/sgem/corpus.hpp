#pragma once

#include "sgem/core.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sgem {

// ─── Synthetic source domain ────────────────────────────────────────────────

/// Emission model of the synthetic corpora. The language (lexicon and class
/// means) depends only on `language_seed`, so corpora drawn with different
/// sampling seeds share it.
struct EmissionParams {
  int feature_dim = 16;
  double separation = 5.0;  // distance between any two class means
  double sigma = 1.0;       // isotropic frame noise (clean)
  int min_frames_per_token = 2;
  int max_frames_per_token = 4;
  int min_silence_frames = 1;
  int max_silence_frames = 3;
  std::uint64_t language_seed = 20230601;
  int lexicon_size = 40;
  int min_word_length = 2;
  int max_word_length = 5;
  int max_words = 5;
};

struct LengthRange {
  int min_tokens = 3;
  int max_tokens = 30;
};

/// Lexicon plus one Gaussian mean per token (blank row = silence).
struct SyntheticLanguage {
  std::vector<std::string> lexicon;
  Matrix means;  // C x feature_dim
};

SyntheticLanguage make_language(const Vocabulary& vocab, const EmissionParams& params);

/// Draws `n` labeled utterances; ids are "utt00000", "utt00001", ... Every
/// feature value is float-representable.
std::vector<Utterance> make_synthetic_corpus(const Vocabulary& vocab, int n, LengthRange range,
                                             const EmissionParams& params, std::uint64_t seed);

// ─── Shift injection ────────────────────────────────────────────────────────

/// output = signal + g * noise with g chosen so that the mean-square power
/// ratio equals snr_db. Noise rows are tiled or truncated to the signal.
Matrix mix_at_snr(const Matrix& signal, const Matrix& noise, double snr_db);

/// 10 log10(P_signal / P_noise), powers as mean squares.
double measured_snr_db(const Matrix& signal, const Matrix& noise);

inline constexpr int kNoiseTextureCount = 8;
std::string_view noise_texture_name(int texture);

/// Deterministic structured noise: stationary offset, slow modulation,
/// sparse bursts and a white floor, weighted per texture.
Matrix noise_texture(int texture, int frames, int feature_dim);

enum class ShiftKind { none, gauss, texture };

struct ShiftSpec {
  ShiftKind kind = ShiftKind::none;
  int texture = 0;
  double snr_db = 10.0;
};

/// Parses "none", "gauss" or "texture:K".
ShiftSpec parse_shift(std::string_view text, double snr_db);

/// Applies the shift; gauss noise is seeded per utterance id.
void apply_shift(std::vector<Utterance>& utts, const ShiftSpec& shift, std::uint64_t seed);

// ─── Files ──────────────────────────────────────────────────────────────────

/// "SGEMF1", u32 rows, u32 cols (little-endian), f32 row-major payload.
void write_features(const std::filesystem::path& path, const Matrix& features);
Matrix read_features(const std::filesystem::path& path);

struct CorpusEntry {
  std::string id;
  std::string features;  // path, relative to the manifest directory
  std::string reference;
  int frames = 0;
};

struct CorpusManifest {
  std::vector<CorpusEntry> entries;
};

/// Writes `<dir>/manifest.jsonl` and `<dir>/feats/<id>.sgf`.
CorpusManifest write_corpus(const std::filesystem::path& dir, const std::vector<Utterance>& utts);
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& path);
/// Reads the manifest and every feature file it references.
std::vector<Utterance> load_corpus(const std::filesystem::path& manifest_path);

struct ResultRecord {
  std::string id;
  std::string ref;
  std::string hyp_before;
  std::string hyp_after;
  double wer_before = 0.0;
  double wer_after = 0.0;
  std::vector<double> losses;
  bool fallback = false;
};

std::string result_to_json(const ResultRecord& record);
ResultRecord result_from_json(std::string_view line);

// ─── Metrics ────────────────────────────────────────────────────────────────

std::vector<std::string> split_words(std::string_view text);

template <typename T>
int edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  std::vector<int> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

/// Word-level Levenshtein distance over |ref|; may exceed 1.
double wer(std::string_view reference, std::string_view hypothesis);
/// Character-level counterpart (spaces count as characters).
double cer(std::string_view reference, std::string_view hypothesis);

/// Accumulates edits and reference words for a corpus-level rate.
struct ErrorCounter {
  long edits = 0;
  long reference_words = 0;

  void add(std::string_view reference, std::string_view hypothesis);
  [[nodiscard]] double rate() const;
};

/// Partitions by frame count into (-inf, e1), [e1, e2), ..., [ek, inf).
std::vector<CorpusManifest> bucket_by_length(const CorpusManifest& manifest, const std::vector<int>& edges);

}  // namespace sgem
