#pragma once

// Brute-force references for the decoders.

#include "sgem/decoding.hpp"
#include "sgem/lm.hpp"
#include "sgem/random.hpp"

#include <functional>
#include <limits>
#include <map>
#include <vector>

namespace sgem::test {

inline double path_score(const LogitMatrix& logits, const std::vector<int>& path) {
  double s = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) s += logits.values(static_cast<Eigen::Index>(t), path[t]);
  return s;
}

// Visits every length-L frame labelling.
inline void for_each_path(int L, int C, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> path(static_cast<std::size_t>(L), 0);
  while (true) {
    visit(path);
    int t = 0;
    while (t < L && ++path[static_cast<std::size_t>(t)] == C) path[static_cast<std::size_t>(t++)] = 0;
    if (t == L) return;
  }
}

// Exhaustive marginalized search: every collapsed prefix scored by the
// log-sum of its alignments plus the weighted sentence LM score.
inline Hypothesis exhaustive_search(const LogitMatrix& logits, const Vocabulary& vocab, const NGramLM* lm,
                                    double lambda_lm) {
  std::map<std::vector<int>, double> am;
  for_each_path(logits.rows(), logits.cols(), [&](const std::vector<int>& path) {
    const auto prefix = ctc_collapse(TokenSequence{path}, vocab).ids;
    const double s = path_score(logits, path);
    auto [it, inserted] = am.try_emplace(prefix, s);
    if (!inserted) it->second = log_add_exp(it->second, s);
  });
  Hypothesis best;
  best.fused_score = -std::numeric_limits<double>::infinity();
  for (const auto& [prefix, a] : am) {
    const double l = lm ? lm->score_sentence(TokenSequence{prefix}) : 0.0;
    const double f = a + lambda_lm * l;
    if (f > best.fused_score) best = Hypothesis{TokenSequence{prefix}, a, l, f, lambda_lm};
  }
  return best;
}

// An order-`order` LM fitted on 30 random sentences of 1-6 tokens.
inline NGramLM random_lm(Rng& rng, const Vocabulary& vocab, int order) {
  std::vector<TokenSequence> text;
  for (int n = 0; n < 30; ++n) {
    TokenSequence s;
    const int len = rng.integer(1, 6);
    for (int i = 0; i < len; ++i) s.ids.push_back(rng.integer(1, vocab.size() - 1));
    text.push_back(s);
  }
  return NGramLM::fit(vocab, text, order);
}

// A random alignment of `target` over L frames; L must leave room for the
// optional blanks (L >= 2 * |target| + 1 is always enough).
inline std::vector<int> random_alignment(Rng& rng, const TokenSequence& target, int L) {
  std::vector<int> path;
  if (rng.uniform() < 0.5) path.push_back(0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (i > 0 && (target.ids[i] == target.ids[i - 1] || rng.uniform() < 0.3)) path.push_back(0);
    path.push_back(target.ids[i]);
  }
  if (rng.uniform() < 0.5) path.push_back(0);
  while (static_cast<int>(path.size()) < L) {
    const auto at = static_cast<std::size_t>(rng.integer(0, static_cast<int>(path.size()) - 1));
    path.insert(path.begin() + static_cast<long>(at), path[at]);
  }
  return path;
}

}  // namespace sgem::test
