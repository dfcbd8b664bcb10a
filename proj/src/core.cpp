#include "sgem/core.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace sgem {

std::string_view to_string(ModelMode mode) {
  return mode == ModelMode::frame_synchronous ? "frame_synchronous" : "autoregressive";
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, int blank_index)
    : tokens_(std::move(tokens)), blank_index_(blank_index) {
  if (tokens_.size() < 2) throw Error("vocabulary needs at least 2 tokens");
  if (blank_index_ < 0 || blank_index_ >= size()) throw Error("blank_index out of range");
  std::set<std::string> seen;
  for (const auto& t : tokens_) {
    if (t.empty()) throw Error("vocabulary token must be non-empty");
    if (!seen.insert(t).second) throw Error("duplicate vocabulary token '" + t + "'");
  }
  delimiter_ = find("|");
}

Vocabulary Vocabulary::reference() {
  std::vector<std::string> tokens{"<blank>", "|"};
  for (char c = 'a'; c <= 'l'; ++c) tokens.emplace_back(1, c);
  return Vocabulary(std::move(tokens), 0);
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  for (int i = 0; i < size(); ++i) {
    if (tokens_[static_cast<std::size_t>(i)] == token) return i;
  }
  return std::nullopt;
}

TokenSequence encode_text(const Vocabulary& vocab, std::string_view text) {
  TokenSequence seq;
  for (char c : text) {
    std::optional<int> id;
    if (c == ' ') {
      id = vocab.word_delimiter();
    } else {
      id = vocab.find(std::string_view(&c, 1));
    }
    if (!id || *id == vocab.blank_index()) {
      throw Error(std::string("character '") + c + "' is not a vocabulary token");
    }
    seq.ids.push_back(*id);
  }
  return seq;
}

std::string decode_text(const Vocabulary& vocab, const TokenSequence& seq) {
  std::string out;
  for (int id : seq.ids) {
    if (id == vocab.blank_index()) continue;
    if (vocab.word_delimiter() && id == *vocab.word_delimiter()) {
      out += ' ';
    } else {
      out += vocab.token(id);
    }
  }
  return out;
}

void check_sequence(const Vocabulary& vocab, const TokenSequence& seq, bool collapsed) {
  for (int id : seq.ids) {
    if (id < 0 || id >= vocab.size()) throw Error("token id out of range");
    if (collapsed && id == vocab.blank_index()) throw Error("collapsed sequence contains blank");
  }
}

void check_utterance(const Vocabulary& vocab, const Utterance& utt) {
  if (utt.features.rows() < 1 || utt.features.cols() < 1) {
    throw Error("utterance '" + utt.id + "' has empty features");
  }
  if (!utt.features.allFinite()) throw Error("utterance '" + utt.id + "' has non-finite features");
  if (utt.reference) check_sequence(vocab, encode_text(vocab, *utt.reference), true);
}

double log_sum_exp(const Eigen::Ref<const RowVector>& row) {
  const double m = row.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((row.array() - m).exp().sum());
}

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

int argmax(const Eigen::Ref<const RowVector>& row) {
  int best = 0;
  for (int j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

LogitMatrix LogitMatrix::from_scores(const Matrix& scores) {
  LogitMatrix out{scores, true};
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    out.values.row(i).array() -= log_sum_exp(scores.row(i));
  }
  return out;
}

double max_normalization_error(const LogitMatrix& logits) {
  double worst = 0.0;
  for (int i = 0; i < logits.rows(); ++i) {
    worst = std::max(worst, std::abs(log_sum_exp(logits.values.row(i))));
  }
  return worst;
}

}  // namespace sgem
