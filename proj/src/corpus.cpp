#include "sgem/corpus.hpp"

#include "sgem/random.hpp"

#include <json.hpp>

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace sgem {
namespace {

using json = nlohmann::json;

constexpr char kFeatureMagic[] = "SGEMF1";

void round_to_float(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

double mean_square(const Matrix& m) { return m.squaredNorm() / static_cast<double>(m.size()); }

Matrix fit_rows(const Matrix& noise, Eigen::Index rows) {
  Matrix out(rows, noise.cols());
  for (Eigen::Index r = 0; r < rows; ++r) out.row(r) = noise.row(r % noise.rows());
  return out;
}

RowVector random_direction(Rng& rng, int dim) {
  RowVector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v / v.norm() * std::sqrt(static_cast<double>(dim));
}

struct TextureProfile {
  const char* name;
  double offset;
  double modulation;
  double period;
  double burst_rate;
  double white;
};

// Loosely shaped after common background noises: stationary hums are mostly
// offset, speech-like noises modulate, impulsive ones burst.
constexpr TextureProfile kTextures[kNoiseTextureCount] = {
    {"air_conditioner", 1.0, 0.2, 40.0, 0.0, 0.2},
    {"airport_announcement", 0.7, 0.8, 12.0, 0.0, 0.2},
    {"babble", 0.7, 0.6, 6.0, 0.0, 0.4},
    {"copy_machine", 0.9, 0.5, 4.0, 0.0, 0.2},
    {"munching", 0.7, 0.3, 10.0, 0.2, 0.3},
    {"neighbors", 0.8, 0.7, 25.0, 0.05, 0.2},
    {"shutting_door", 0.8, 0.1, 30.0, 0.08, 0.1},
    {"typing", 0.7, 0.2, 8.0, 0.3, 0.2},
};

}  // namespace

// ─── Synthetic corpora ──────────────────────────────────────────────────────

SyntheticLanguage make_language(const Vocabulary& vocab, const EmissionParams& params) {
  const int C = vocab.size();
  const int D = params.feature_dim;
  if (D < C) throw Error("feature_dim must be at least the vocabulary size");
  Rng rng(params.language_seed);

  // Scaled one-hot means under a fixed random rotation: every pair sits
  // exactly `separation` apart.
  Matrix gauss(D, D);
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = rng.normal();
  const Matrix rotation = Eigen::HouseholderQR<Matrix>(gauss).householderQ();
  SyntheticLanguage lang;
  lang.means = Matrix::Zero(C, D);
  const double scale = params.separation / std::sqrt(2.0);
  for (int k = 0; k < C; ++k) lang.means.row(k) = scale * rotation.row(k);

  std::vector<int> letters;
  for (int k = 0; k < C; ++k) {
    if (k != vocab.blank_index() && (!vocab.word_delimiter() || k != *vocab.word_delimiter())) letters.push_back(k);
  }
  if (letters.size() < 2) throw Error("synthetic language needs at least two letters");
  std::set<std::string> seen;
  int attempts = 0;
  while (static_cast<int>(lang.lexicon.size()) < params.lexicon_size) {
    if (++attempts > 100000) throw Error("could not draw a lexicon of the requested size");
    const int len = rng.integer(params.min_word_length, params.max_word_length);
    std::string word;
    int prev = -1;
    while (static_cast<int>(word.size()) < len) {
      const int k = letters[static_cast<std::size_t>(rng.integer(0, static_cast<int>(letters.size()) - 1))];
      if (k == prev) continue;
      word += vocab.token(k);
      prev = k;
    }
    if (seen.insert(word).second) lang.lexicon.push_back(word);
  }
  return lang;
}

std::vector<Utterance> make_synthetic_corpus(const Vocabulary& vocab, int n, LengthRange range,
                                             const EmissionParams& params, std::uint64_t seed) {
  if (range.min_tokens < 1 || range.max_tokens > 100 || range.min_tokens > range.max_tokens) {
    throw Error("length_range must lie within [1, 100] tokens");
  }
  if (n < 0) throw Error("utterance count must be non-negative");
  const SyntheticLanguage lang = make_language(vocab, params);
  Rng rng(seed);
  const int D = params.feature_dim;

  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) {
    std::string text;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw Error("length_range cannot be met by the synthetic lexicon");
      const int words = rng.integer(1, params.max_words);
      text.clear();
      for (int w = 0; w < words; ++w) {
        if (w) text += ' ';
        text += lang.lexicon[static_cast<std::size_t>(rng.integer(0, static_cast<int>(lang.lexicon.size()) - 1))];
      }
      const int tokens = static_cast<int>(text.size());
      if (tokens >= range.min_tokens && tokens <= range.max_tokens) break;
    }
    const TokenSequence seq = encode_text(vocab, text);

    std::vector<int> frame_labels;
    auto emit = [&](int label, int count) { frame_labels.insert(frame_labels.end(), static_cast<std::size_t>(count), label); };
    emit(vocab.blank_index(), rng.integer(params.min_silence_frames, params.max_silence_frames));
    for (int id : seq.ids) emit(id, rng.integer(params.min_frames_per_token, params.max_frames_per_token));
    emit(vocab.blank_index(), rng.integer(params.min_silence_frames, params.max_silence_frames));

    Matrix feats(static_cast<Eigen::Index>(frame_labels.size()), D);
    for (std::size_t t = 0; t < frame_labels.size(); ++t) {
      for (int d = 0; d < D; ++d) {
        feats(static_cast<Eigen::Index>(t), d) = lang.means(frame_labels[t], d) + params.sigma * rng.normal();
      }
    }
    round_to_float(feats);
    char id[32];
    std::snprintf(id, sizeof(id), "utt%05d", u);
    out.push_back(Utterance{id, std::move(feats), text});
  }
  return out;
}

// ─── Shift injection ────────────────────────────────────────────────────────

Matrix mix_at_snr(const Matrix& signal, const Matrix& noise, double snr_db) {
  if (noise.rows() < 1 || noise.cols() != signal.cols()) throw Error("noise feature_dim differs from signal");
  const double p_signal = mean_square(signal);
  if (!(p_signal > 0.0)) throw Error("signal power must be positive");
  const Matrix fitted = fit_rows(noise, signal.rows());
  const double p_noise = mean_square(fitted);
  if (!(p_noise > 0.0)) throw Error("zero-power noise");
  const double gain = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
  return signal + gain * fitted;
}

double measured_snr_db(const Matrix& signal, const Matrix& noise) {
  return 10.0 * std::log10(mean_square(signal) / mean_square(noise));
}

std::string_view noise_texture_name(int texture) {
  if (texture < 0 || texture >= kNoiseTextureCount) throw Error("noise texture index out of range");
  return kTextures[texture].name;
}

Matrix noise_texture(int texture, int frames, int feature_dim) {
  if (texture < 0 || texture >= kNoiseTextureCount) throw Error("noise texture index out of range");
  const TextureProfile& p = kTextures[texture];
  Rng rng(mix_seed(0x5e3d + static_cast<std::uint64_t>(texture), p.name));
  const RowVector offset = random_direction(rng, feature_dim);
  const RowVector wave = random_direction(rng, feature_dim);
  const RowVector burst = random_direction(rng, feature_dim);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);

  Matrix out(frames, feature_dim);
  for (int t = 0; t < frames; ++t) {
    RowVector row = p.offset * offset + p.modulation * std::sin(2.0 * M_PI * t / p.period + phase) * wave;
    if (rng.uniform() < p.burst_rate) row += 2.0 * burst;
    for (int d = 0; d < feature_dim; ++d) row[d] += p.white * rng.normal();
    out.row(t) = row;
  }
  return out;
}

ShiftSpec parse_shift(std::string_view text, double snr_db) {
  ShiftSpec spec;
  spec.snr_db = snr_db;
  if (text == "none") return spec;
  if (text == "gauss") {
    spec.kind = ShiftKind::gauss;
    return spec;
  }
  constexpr std::string_view prefix = "texture:";
  if (text.substr(0, prefix.size()) == prefix) {
    const std::string_view num = text.substr(prefix.size());
    int k = -1;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), k);
    if (ec != std::errc{} || ptr != num.data() + num.size() || k < 0 || k >= kNoiseTextureCount) {
      throw Error("texture index must be in [0, " + std::to_string(kNoiseTextureCount) + ")");
    }
    spec.kind = ShiftKind::texture;
    spec.texture = k;
    return spec;
  }
  throw Error("unknown shift '" + std::string(text) + "' (expected none, gauss or texture:K)");
}

void apply_shift(std::vector<Utterance>& utts, const ShiftSpec& shift, std::uint64_t seed) {
  if (shift.kind == ShiftKind::none) return;
  for (auto& utt : utts) {
    Matrix noise;
    if (shift.kind == ShiftKind::gauss) {
      Rng rng(mix_seed(seed, utt.id));
      noise.resize(utt.features.rows(), utt.features.cols());
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
    } else {
      noise = noise_texture(shift.texture, utt.frames(), static_cast<int>(utt.features.cols()));
    }
    utt.features = mix_at_snr(utt.features, noise, shift.snr_db);
    round_to_float(utt.features);
  }
}

// ─── Files ──────────────────────────────────────────────────────────────────

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("truncated feature file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_features(const std::filesystem::path& path, const Matrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write feature file " + path.string());
  out.write(kFeatureMagic, 6);
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.size(); ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(features.data()[i])));
  }
  if (!out) throw Error("failed writing feature file " + path.string());
}

Matrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file " + path.string());
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kFeatureMagic, 6) != 0) {
    throw Error("not an SGEMF1 feature file: " + path.string());
  }
  const std::uint32_t rows = get_u32(in);
  const std::uint32_t cols = get_u32(in);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  return m;
}

CorpusManifest write_corpus(const std::filesystem::path& dir, const std::vector<Utterance>& utts) {
  std::filesystem::create_directories(dir / "feats");
  CorpusManifest manifest;
  std::set<std::string> ids;
  for (const auto& utt : utts) {
    if (!ids.insert(utt.id).second) throw Error("duplicate utterance id '" + utt.id + "'");
    const std::string rel = "feats/" + utt.id + ".sgf";
    write_features(dir / rel, utt.features);
    manifest.entries.push_back({utt.id, rel, utt.reference.value_or(""), utt.frames()});
  }
  write_manifest(dir / "manifest.jsonl", manifest);
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& e : manifest.entries) {
    out << json{{"id", e.id}, {"features", e.features}, {"reference", e.reference}, {"frames", e.frames}}.dump()
        << '\n';
  }
  if (!out) throw Error("failed writing manifest " + path.string());
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  CorpusManifest manifest;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      CorpusEntry e;
      e.id = j.at("id").get<std::string>();
      e.features = j.at("features").get<std::string>();
      e.reference = j.value("reference", std::string());
      e.frames = j.at("frames").get<int>();
      if (!ids.insert(e.id).second) throw Error("duplicate utterance id '" + e.id + "'");
      manifest.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return manifest;
}

std::vector<Utterance> load_corpus(const std::filesystem::path& manifest_path) {
  const CorpusManifest manifest = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  std::vector<Utterance> utts;
  utts.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Matrix feats = read_features(base / e.features);
    if (feats.rows() != e.frames) throw Error("frame count mismatch for '" + e.id + "'");
    std::optional<std::string> ref;
    if (!e.reference.empty()) ref = e.reference;
    utts.push_back(Utterance{e.id, std::move(feats), std::move(ref)});
  }
  return utts;
}

std::string result_to_json(const ResultRecord& r) {
  return json{{"id", r.id},
              {"ref", r.ref},
              {"hyp_before", r.hyp_before},
              {"hyp_after", r.hyp_after},
              {"wer_before", r.wer_before},
              {"wer_after", r.wer_after},
              {"losses", r.losses},
              {"fallback", r.fallback}}
      .dump();
}

ResultRecord result_from_json(std::string_view line) {
  const json j = json::parse(line);
  ResultRecord r;
  r.id = j.at("id").get<std::string>();
  r.ref = j.at("ref").get<std::string>();
  r.hyp_before = j.at("hyp_before").get<std::string>();
  r.hyp_after = j.at("hyp_after").get<std::string>();
  r.wer_before = j.at("wer_before").get<double>();
  r.wer_after = j.at("wer_after").get<double>();
  r.losses = j.at("losses").get<std::vector<double>>();
  r.fallback = j.at("fallback").get<bool>();
  return r;
}

// ─── Metrics ────────────────────────────────────────────────────────────────

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

double wer(std::string_view reference, std::string_view hypothesis) {
  const auto ref = split_words(reference);
  if (ref.empty()) throw Error("WER needs a non-empty reference");
  return static_cast<double>(edit_distance(ref, split_words(hypothesis))) / static_cast<double>(ref.size());
}

double cer(std::string_view reference, std::string_view hypothesis) {
  if (reference.empty()) throw Error("CER needs a non-empty reference");
  const std::vector<char> ref(reference.begin(), reference.end());
  const std::vector<char> hyp(hypothesis.begin(), hypothesis.end());
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

void ErrorCounter::add(std::string_view reference, std::string_view hypothesis) {
  const auto ref = split_words(reference);
  if (ref.empty()) throw Error("WER needs a non-empty reference");
  edits += edit_distance(ref, split_words(hypothesis));
  reference_words += static_cast<long>(ref.size());
}

double ErrorCounter::rate() const {
  return reference_words == 0 ? 0.0 : static_cast<double>(edits) / static_cast<double>(reference_words);
}

std::vector<CorpusManifest> bucket_by_length(const CorpusManifest& manifest, const std::vector<int>& edges) {
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) throw Error("bucket edges must be strictly increasing");
  }
  std::vector<CorpusManifest> buckets(edges.size() + 1);
  for (const auto& e : manifest.entries) {
    const auto idx = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), e.frames) - edges.begin());
    buckets[idx].entries.push_back(e);
  }
  return buckets;
}

}  // namespace sgem
