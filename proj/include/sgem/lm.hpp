#pragma once

#include "sgem/core.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace sgem {

/// Token-level n-gram language model with add-k smoothing.
///
/// Predicts over the full vocabulary; the blank slot stands for the
/// end-of-sentence marker. Contexts are the last min(n-1, |history|) tokens of
/// a history that starts at the sentence boundary. A context never seen in
/// training backs off to the unigram distribution.
class NGramLM {
 public:
  static constexpr double kDefaultAddK = 0.1;

  static NGramLM fit(const Vocabulary& vocab, const std::vector<TokenSequence>& transcripts,
                     int order, double add_k = kDefaultAddK);

  /// Log-probability row of length C over the next token.
  [[nodiscard]] const RowVector& score_next(std::span<const int> context) const;
  [[nodiscard]] const RowVector& score_next(const TokenSequence& context) const {
    return score_next(std::span<const int>(context.ids));
  }

  /// log p(</s> | context).
  [[nodiscard]] double score_end(std::span<const int> context) const {
    return score_next(context)[boundary_];
  }

  /// Sum of conditionals over the sequence plus the end-of-sentence term.
  [[nodiscard]] double score_sentence(const TokenSequence& seq) const;

  [[nodiscard]] int order() const { return order_; }
  [[nodiscard]] int vocab_size() const { return vocab_size_; }
  [[nodiscard]] double add_k() const { return add_k_; }
  [[nodiscard]] std::size_t context_count() const { return table_.size(); }
  [[nodiscard]] const RowVector& unigram() const { return unigram_; }

  void save(const std::filesystem::path& path, const Vocabulary& vocab) const;
  static NGramLM load(const std::filesystem::path& path, const Vocabulary& vocab);

 private:
  NGramLM(int order, int vocab_size, int boundary, double add_k)
      : order_(order), vocab_size_(vocab_size), boundary_(boundary), add_k_(add_k) {}

  int order_;
  int vocab_size_;
  int boundary_;
  double add_k_;
  std::map<std::vector<int>, RowVector> table_;
  RowVector unigram_;
};

}  // namespace sgem
