// Command-line driver: corpus creation, source training, adaptation,
// evaluation and ablation.

#include "sgem/adaptation.hpp"
#include "sgem/corpus.hpp"
#include "sgem/decoding.hpp"
#include "sgem/lm.hpp"
#include "sgem/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace sgem;

namespace {

/// --seed, else SGEM_SEED, else 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SGEM_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(std::string("SGEM_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

std::vector<int> parse_edges(const std::string& text) {
  std::vector<int> edges;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      edges.push_back(std::stoi(item, &used));
      if (used != item.size()) throw Error("");
    } catch (const std::exception&) {
      throw Error("bad bucket edge '" + item + "'");
    }
  }
  if (!std::is_sorted(edges.begin(), edges.end())) throw Error("bucket edges must be ascending");
  return edges;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

struct AdaptFlags {
  std::string model;
  std::string lm;
  std::string manifest;
  std::string config;
  std::string decode = "greedy";
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_adapt_flags(CLI::App* cmd, AdaptFlags& f, bool lm_required) {
  cmd->add_option("--model", f.model, "Acoustic model checkpoint")->required();
  auto* lm = cmd->add_option("--lm", f.lm, "N-gram language model file");
  if (lm_required) lm->required();
  cmd->add_option("--manifest", f.manifest, "Corpus manifest (JSONL)")->required();
  cmd->add_option("--config", f.config, "Adaptation config (key = value lines)");
  cmd->add_option("--decode", f.decode, "Inference decode for transcripts")
      ->check(CLI::IsMember({"greedy", "beam"}));
  cmd->add_option("--jobs", f.jobs, "Parallel adaptation workers")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Seed (fallback: SGEM_SEED)");
  cmd->add_option("--set", f.overrides, "Config override KEY=VALUE (repeatable)");
}

/// Config file, then --set overrides, then the seed. Without an explicit
/// trainable_groups entry the model family picks the groups.
AdaptationConfig build_config(const AdaptFlags& f, ModelMode model_mode) {
  AdaptationConfig base;
  base.trainable_groups.clear();
  AdaptationConfig config = f.config.empty() ? base : load_config(f.config, base);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects KEY=VALUE, got '" + kv + "'");
    set_config_field(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed || std::getenv("SGEM_SEED")) config.seed = resolve_seed(f.seed);
  if (config.trainable_groups.empty()) config.trainable_groups = default_trainable_groups(model_mode);
  return validate_config(config, true);
}

struct Loaded {
  AcousticModel model;
  std::optional<NGramLM> lm;
  std::vector<Utterance> corpus;
};

Loaded load_inputs(const AdaptFlags& f) {
  const Vocabulary vocab = Vocabulary::reference();
  Loaded in{load_checkpoint(f.model, vocab), std::nullopt, load_corpus(f.manifest)};
  if (!f.lm.empty()) in.lm = NGramLM::load(f.lm, vocab);
  for (const auto& utt : in.corpus) {
    if (!utt.reference) throw Error("utterance '" + utt.id + "' has no reference");
  }
  return in;
}

void print_relative(double before, double after) {
  const double rel = before > 0.0 ? (before - after) / before : 0.0;
  std::cout << "wer_before=" << fmt(before) << " wer_after=" << fmt(after) << " relative_reduction=" << fmt(rel)
            << '\n';
}

int cmd_make_corpus(const std::string& out, int n, std::optional<std::uint64_t> seed_flag, const std::string& shift,
                    double snr_db, int min_tokens, int max_tokens, double separation) {
  const std::uint64_t seed = resolve_seed(seed_flag);
  const ShiftSpec spec = parse_shift(shift, snr_db);
  EmissionParams emission;
  emission.separation = separation;
  auto utts = make_synthetic_corpus(Vocabulary::reference(), n, {min_tokens, max_tokens}, emission, seed);
  apply_shift(utts, spec, seed);
  write_corpus(out, utts);
  std::cout << "utterances=" << utts.size() << " shift=" << shift << " seed=" << seed << '\n';
  return 0;
}

int cmd_fit_lm(const std::string& manifest, const std::string& out, int order) {
  const Vocabulary vocab = Vocabulary::reference();
  std::vector<TokenSequence> texts;
  for (const auto& e : read_manifest(manifest).entries) texts.push_back(encode_text(vocab, e.reference));
  NGramLM::fit(vocab, texts, order).save(out, vocab);
  std::cout << "sentences=" << texts.size() << " order=" << order << '\n';
  return 0;
}

int cmd_train_source(const std::string& manifest, const std::string& out, const std::string& mode,
                     std::optional<std::uint64_t> seed_flag, TrainingConfig tc, ModelDims dims, bool quiet) {
  tc.seed = resolve_seed(seed_flag);
  const Vocabulary vocab = Vocabulary::reference();
  const auto corpus = load_corpus(manifest);
  const ModelMode mm = mode == "ar" ? ModelMode::autoregressive : ModelMode::frame_synchronous;
  AcousticModel model(dims, vocab, mm, tc.seed);
  const auto report = train_source(model, corpus, tc, [&](int epoch, double loss) {
    if (!quiet) std::cerr << "epoch=" << epoch << " loss=" << fmt(loss) << '\n';
  });
  if (report.diverged) {
    const fs::path partial = fs::path(out).string() + ".partial";
    save_checkpoint(model, partial);
    std::cerr << "error: training diverged after " << report.steps << " steps; last finite parameters saved to "
              << partial.string() << '\n';
    return 2;
  }
  save_checkpoint(model, out);
  std::cout << "steps=" << report.steps << " final_loss="
            << (report.epoch_loss.empty() ? std::string("n/a") : fmt(report.epoch_loss.back())) << '\n';
  return 0;
}

int cmd_adapt(const AdaptFlags& f, const std::string& out) {
  const Loaded in = load_inputs(f);
  const AdaptationConfig config = build_config(f, in.model.mode());
  const DecodeMode mode = parse_decode_mode(f.decode);
  const NGramLM* lm = in.lm ? &*in.lm : nullptr;
  const auto results = run_corpus(in.model, lm, in.corpus, config, mode, f.jobs);

  std::ofstream os(out);
  if (!os) throw Error("cannot write '" + out + "'");
  int fallbacks = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    ResultRecord rec;
    rec.id = r.utterance_id;
    rec.ref = *in.corpus[i].reference;
    rec.hyp_before = r.transcript_before;
    rec.hyp_after = r.transcript_after;
    rec.wer_before = wer(rec.ref, rec.hyp_before);
    rec.wer_after = wer(rec.ref, rec.hyp_after);
    for (const auto& l : r.loss_trajectory) rec.losses.push_back(l.total);
    rec.fallback = r.fallback_used;
    fallbacks += r.fallback_used ? 1 : 0;
    os << result_to_json(rec) << '\n';
  }
  if (!os) throw Error("failed writing '" + out + "'");
  const double before = score_results(in.corpus, results, false).wer;
  const double after = score_results(in.corpus, results, true).wer;
  std::cout << "utterances=" << results.size() << " steps=" << config.N << " decode=" << f.decode
            << " fallbacks=" << fallbacks << '\n';
  print_relative(before, after);
  return 0;
}

int cmd_evaluate(const AdaptFlags& f, const std::string& buckets) {
  const Loaded in = load_inputs(f);
  const AdaptationConfig config = build_config(f, in.model.mode());
  const DecodeMode mode = parse_decode_mode(f.decode);
  const NGramLM* lm = in.lm ? &*in.lm : nullptr;
  const auto score = evaluate(in.model, lm, in.corpus, config, mode);
  std::cout << "utterances=" << in.corpus.size() << " decode=" << f.decode << " wer=" << fmt(score.wer)
            << " edits=" << score.edits << " reference_words=" << score.reference_words << '\n';
  if (!buckets.empty()) {
    const auto edges = parse_edges(buckets);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < in.corpus.size(); ++i) index[in.corpus[i].id] = i;
    const auto parts = bucket_by_length(read_manifest(f.manifest), edges);
    for (std::size_t b = 0; b < parts.size(); ++b) {
      const std::string lo = b == 0 ? "-inf" : std::to_string(edges[b - 1]);
      const std::string hi = b == edges.size() ? "inf" : std::to_string(edges[b]);
      ErrorCounter counter;
      for (const auto& e : parts[b].entries) {
        const std::size_t i = index.at(e.id);
        counter.add(*in.corpus[i].reference, score.hypotheses[i]);
      }
      std::cout << "bucket=[" << lo << "," << hi << ") utterances=" << parts[b].entries.size()
                << " wer=" << (parts[b].entries.empty() ? std::string("n/a") : fmt(counter.rate())) << '\n';
    }
  }
  return 0;
}

int cmd_ablate(const AdaptFlags& f) {
  const Loaded in = load_inputs(f);
  const AdaptationConfig config = build_config(f, in.model.mode());
  const DecodeMode mode = parse_decode_mode(f.decode);
  const NGramLM* lm = in.lm ? &*in.lm : nullptr;
  const auto rows = run_ablation(in.model, lm, in.corpus, config, mode, f.jobs);
  auto mark = [](bool on) { return on ? "on" : "off"; };
  for (const auto& r : rows) {
    std::cout << "bs=" << mark(r.beam_search) << " gem=" << mark(r.gem) << " ns=" << mark(r.ns)
              << " wer=" << fmt(r.wer) << '\n';
  }
  return 0;
}

int cmd_dump_logits(const std::string& model_path, const std::string& manifest, const std::string& out) {
  const Vocabulary vocab = Vocabulary::reference();
  const AcousticModel model = load_checkpoint(model_path, vocab);
  if (model.mode() != ModelMode::frame_synchronous) throw Error("dump-logits needs a frame-synchronous model");
  std::ofstream os(out);
  if (!os) throw Error("cannot write '" + out + "'");
  os << std::setprecision(17);
  for (const auto& utt : load_corpus(manifest)) {
    const LogitMatrix logits = model.forward_frames(utt);
    os << utt.id << ' ' << logits.values.rows() << ' ' << logits.values.cols();
    for (Eigen::Index i = 0; i < logits.values.size(); ++i) os << ' ' << logits.values.data()[i];
    os << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-utterance test-time adaptation toolkit"};
  app.require_subcommand(1);

  std::string out;
  std::optional<std::uint64_t> seed;

  auto* make = app.add_subcommand("make-corpus", "Generate a synthetic labeled corpus");
  int n = 0;
  std::string shift = "none";
  double snr_db = 10.0;
  int min_tokens = LengthRange{}.min_tokens;
  int max_tokens = LengthRange{}.max_tokens;
  double separation = EmissionParams{}.separation;
  make->add_option("--out", out, "Output directory")->required();
  make->add_option("--n", n, "Number of utterances")->required()->check(CLI::NonNegativeNumber);
  make->add_option("--seed", seed, "Sampling seed (fallback: SGEM_SEED)");
  make->add_option("--shift", shift, "none, gauss or texture:K (K in 0..7)");
  make->add_option("--snr-db", snr_db, "Signal-to-noise ratio of the injected shift");
  make->add_option("--min-tokens", min_tokens, "Minimum transcript length in tokens");
  make->add_option("--max-tokens", max_tokens, "Maximum transcript length in tokens");
  make->add_option("--separation", separation, "Distance between class means (noise sigma = 1)")
      ->check(CLI::PositiveNumber);

  auto* fit = app.add_subcommand("fit-lm", "Fit an n-gram LM on manifest references");
  std::string manifest;
  int order = 4;
  fit->add_option("--manifest", manifest, "Corpus manifest (JSONL)")->required();
  fit->add_option("--out", out, "Output LM file")->required();
  fit->add_option("--order", order, "N-gram order")->check(CLI::Range(1, 8));

  auto* train = app.add_subcommand("train-source", "Train the reference acoustic model");
  std::string mode = "ctc";
  TrainingConfig tc;
  bool quiet = false;
  ModelDims dims;
  train->add_option("--manifest", manifest, "Training manifest (JSONL)")->required();
  train->add_option("--out", out, "Output checkpoint")->required();
  train->add_option("--mode", mode, "Model family")->check(CLI::IsMember({"ctc", "ar"}));
  train->add_option("--seed", seed, "Initialization and shuffling seed (fallback: SGEM_SEED)");
  train->add_option("--epochs", tc.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--lr", tc.learning_rate, "Initial learning rate");
  train->add_option("--final-lr", tc.final_learning_rate, "Final learning rate");
  train->add_option("--weight-decay", tc.weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
  train->add_option("--batch-size", tc.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  train->add_option("--hidden", dims.hidden, "Recurrent width per direction")->check(CLI::PositiveNumber);
  train->add_option("--conv-channels", dims.conv_channels, "Convolution channels")->check(CLI::PositiveNumber);
  train->add_flag("--quiet", quiet, "Suppress per-epoch progress");

  AdaptFlags af;
  auto* adapt = app.add_subcommand("adapt", "Adapt and transcribe each utterance episodically");
  add_adapt_flags(adapt, af, true);
  adapt->add_option("--out", out, "Results file (JSONL)")->required();

  auto* eval = app.add_subcommand("evaluate", "Corpus WER of the unadapted model");
  std::string buckets;
  add_adapt_flags(eval, af, false);
  eval->add_option("--buckets", buckets, "Frame-count bucket edges e1,e2,...");

  auto* ablate = app.add_subcommand("ablate", "Beam search / GEM / NS ablation grid");
  add_adapt_flags(ablate, af, true);

  auto* dump = app.add_subcommand("dump-logits", "Write frame logits of every utterance");
  std::string model_path;
  dump->add_option("--model", model_path, "Acoustic model checkpoint")->required();
  dump->add_option("--manifest", manifest, "Corpus manifest (JSONL)")->required();
  dump->add_option("--out", out, "Output text file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*make) return cmd_make_corpus(out, n, seed, shift, snr_db, min_tokens, max_tokens, separation);
    if (*fit) return cmd_fit_lm(manifest, out, order);
    if (*train) return cmd_train_source(manifest, out, mode, seed, tc, dims, quiet);
    if (*adapt) return cmd_adapt(af, out);
    if (*eval) return cmd_evaluate(af, buckets);
    if (*ablate) return cmd_ablate(af);
    if (*dump) return cmd_dump_logits(model_path, manifest, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
