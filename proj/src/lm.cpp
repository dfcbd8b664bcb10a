#include "sgem/lm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sgem {
namespace {

constexpr const char* kMagic = "SGEML1";
constexpr const char* kEndToken = "</s>";

RowVector normalize_counts(const RowVector& counts, double add_k) {
  const double total = counts.sum() + add_k * static_cast<double>(counts.size());
  return ((counts.array() + add_k) / total).log().matrix();
}

}  // namespace

NGramLM NGramLM::fit(const Vocabulary& vocab, const std::vector<TokenSequence>& transcripts,
                     int order, double add_k) {
  if (order < 1) throw Error("n-gram order must be at least 1");
  if (transcripts.empty()) throw Error("cannot fit a language model on an empty corpus");
  if (!(add_k > 0.0 && add_k < 1.0)) throw Error("add-k smoothing must lie in (0, 1)");

  const int C = vocab.size();
  NGramLM lm(order, C, vocab.blank_index(), add_k);
  std::map<std::vector<int>, RowVector> counts;
  RowVector unigram_counts = RowVector::Zero(C);

  for (const auto& seq : transcripts) {
    check_sequence(vocab, seq, true);
    std::vector<int> events = seq.ids;
    events.push_back(lm.boundary_);
    for (std::size_t i = 0; i < events.size(); ++i) {
      unigram_counts[events[i]] += 1.0;
      if (order == 1 || i == 0) continue;
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(order - 1), i);
      std::vector<int> ctx(events.begin() + static_cast<std::ptrdiff_t>(i - len),
                           events.begin() + static_cast<std::ptrdiff_t>(i));
      auto [it, inserted] = counts.try_emplace(std::move(ctx), RowVector::Zero(C));
      it->second[events[i]] += 1.0;
    }
  }

  lm.unigram_ = normalize_counts(unigram_counts, add_k);
  for (auto& [ctx, row] : counts) lm.table_.emplace(ctx, normalize_counts(row, add_k));
  return lm;
}

const RowVector& NGramLM::score_next(std::span<const int> context) const {
  const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(order_ - 1), context.size());
  if (len == 0) return unigram_;
  std::vector<int> key(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
  auto it = table_.find(key);
  return it == table_.end() ? unigram_ : it->second;
}

double NGramLM::score_sentence(const TokenSequence& seq) const {
  double total = 0.0;
  std::span<const int> ids(seq.ids);
  for (std::size_t i = 0; i < ids.size(); ++i) total += score_next(ids.first(i))[ids[i]];
  return total + score_end(ids);
}

void NGramLM::save(const std::filesystem::path& path, const Vocabulary& vocab) const {
  if (vocab.size() != vocab_size_) throw Error("vocabulary size mismatch");
  auto name = [&](int id) -> std::string {
    return id == boundary_ ? std::string(kEndToken) : vocab.token(id);
  };
  std::vector<std::string> lines;
  auto emit = [&](const std::string& ctx, const RowVector& row) {
    for (int j = 0; j < vocab_size_; ++j) {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), row[j] / std::log(10.0));
      lines.push_back(ctx + '\t' + name(j) + '\t' + std::string(buf, ptr));
    }
  };
  emit("", unigram_);
  for (const auto& [ctx, row] : table_) {
    std::string joined;
    for (std::size_t i = 0; i < ctx.size(); ++i) joined += (i ? " " : "") + name(ctx[i]);
    emit(joined, row);
  }
  std::sort(lines.begin(), lines.end());

  std::ofstream out(path);
  if (!out) throw Error("cannot write language model to " + path.string());
  out << kMagic << " n=" << order_ << '\n';
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error("failed writing language model to " + path.string());
}

NGramLM NGramLM::load(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open language model " + path.string());
  std::string header;
  std::getline(in, header);
  const std::string prefix = std::string(kMagic) + " n=";
  if (header.rfind(prefix, 0) != 0) throw Error("not an SGEML1 language model: " + path.string());
  const int order = std::stoi(header.substr(prefix.size()));
  if (order < 1) throw Error("n-gram order must be at least 1");

  const int C = vocab.size();
  NGramLM lm(order, C, vocab.blank_index(), kDefaultAddK);
  auto lookup = [&](const std::string& tok) -> int {
    if (tok == kEndToken) return lm.boundary_;
    auto id = vocab.find(tok);
    if (!id || *id == lm.boundary_) throw Error("vocabulary size mismatch: unknown LM token '" + tok + "'");
    return *id;
  };

  std::map<std::vector<int>, RowVector> rows;
  std::map<std::vector<int>, int> filled;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) throw Error("malformed LM line: " + line);
    std::vector<int> ctx;
    std::istringstream cs(line.substr(0, t1));
    std::string tok;
    while (cs >> tok) ctx.push_back(lookup(tok));
    const int next = lookup(line.substr(t1 + 1, t2 - t1 - 1));
    const double log10p = std::stod(line.substr(t2 + 1));
    auto [it, inserted] = rows.try_emplace(ctx, RowVector::Constant(C, std::nan("")));
    it->second[next] = log10p * std::log(10.0);
    ++filled[ctx];
  }
  for (auto& [ctx, row] : rows) {
    if (filled[ctx] != C || !row.allFinite()) throw Error("language model row incomplete for a context");
    if (ctx.empty()) {
      lm.unigram_ = row;
    } else {
      lm.table_.emplace(ctx, row);
    }
  }
  if (lm.unigram_.size() != C) throw Error("language model lacks a unigram distribution");
  return lm;
}

}  // namespace sgem
