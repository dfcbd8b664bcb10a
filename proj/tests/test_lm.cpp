#include "sgem/lm.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <map>

using namespace sgem;
using namespace sgem::test;

namespace {

double total_probability(const RowVector& logp) { return logp.array().exp().sum(); }

}  // namespace

TEST_CASE("bigram conditionals follow counts") {
  const Vocabulary v = Vocabulary::reference();
  const std::vector<TokenSequence> corpus(3, encode_text(v, "ab"));
  const NGramLM lm = NGramLM::fit(v, corpus, 2);
  const int a = *v.find("a"), b = *v.find("b");
  const RowVector& row = lm.score_next(TokenSequence{{a}});
  CHECK(argmax(row) == b);
  // Add-k oracle: (count + k) / (total + k * C).
  const double k = NGramLM::kDefaultAddK;
  CHECK(row[b] == doctest::Approx(std::log((3.0 + k) / (3.0 + k * 14))).epsilon(1e-12));
  CHECK(row[*v.find("c")] == doctest::Approx(std::log(k / (3.0 + k * 14))).epsilon(1e-12));
  // Sentence end follows "b".
  CHECK(argmax(lm.score_next(TokenSequence{{b}})) == v.blank_index());
  CHECK(lm.score_end(std::vector<int>{b}) == lm.score_next(TokenSequence{{b}})[0]);
}

TEST_CASE("unigram symmetry") {
  const Vocabulary v = Vocabulary::reference();
  const std::vector<TokenSequence> corpus{encode_text(v, "a"), encode_text(v, "b")};
  const NGramLM lm = NGramLM::fit(v, corpus, 1);
  const RowVector& u = lm.unigram();
  CHECK(std::abs(u[*v.find("a")] - u[*v.find("b")]) < 1e-9);
  CHECK(lm.context_count() == 0u);
  CHECK(lm.score_next(TokenSequence{{2, 3, 4}}) == u);
}

TEST_CASE("every row is a distribution and unseen contexts back off") {
  const Vocabulary v = Vocabulary::reference();
  Rng rng(1);
  std::vector<TokenSequence> corpus;
  for (int n = 0; n < 40; ++n) {
    TokenSequence s;
    const int len = rng.integer(1, 12);
    for (int i = 0; i < len; ++i) s.ids.push_back(rng.integer(1, 12));
    corpus.push_back(s);
  }
  const NGramLM lm = NGramLM::fit(v, corpus, 4);
  CHECK(std::abs(total_probability(lm.unigram()) - 1.0) < 1e-6);
  for (int n = 0; n < 200; ++n) {
    TokenSequence ctx;
    const int len = rng.integer(0, 6);
    for (int i = 0; i < len; ++i) ctx.ids.push_back(rng.integer(1, 13));
    CHECK(std::abs(total_probability(lm.score_next(ctx)) - 1.0) < 1e-6);
  }
  CHECK(lm.score_next(TokenSequence{}) == lm.unigram());
  // Token 13 never occurs in the corpus.
  const TokenSequence unseen{{13, 13, 13}};
  CHECK(lm.score_next(unseen) == lm.unigram());
  // Only the last n-1 tokens matter.
  CHECK(lm.score_next(TokenSequence{{5, 2, 3, 4}}) == lm.score_next(TokenSequence{{2, 3, 4}}));
}

TEST_CASE("sentence score chains conditionals") {
  const Vocabulary v = Vocabulary::reference();
  const std::vector<TokenSequence> corpus{encode_text(v, "abc"), encode_text(v, "abd"), encode_text(v, "bc")};
  const NGramLM lm = NGramLM::fit(v, corpus, 3);
  const TokenSequence s = encode_text(v, "abc");
  const double expected = lm.unigram()[s.ids[0]] + lm.score_next(TokenSequence{{s.ids[0]}})[s.ids[1]] +
                          lm.score_next(TokenSequence{{s.ids[0], s.ids[1]}})[s.ids[2]] +
                          lm.score_next(TokenSequence{{s.ids[1], s.ids[2]}})[0];
  CHECK(lm.score_sentence(s) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(lm.score_sentence(TokenSequence{}) == lm.unigram()[0]);
}

TEST_CASE("fit rejects bad input") {
  const Vocabulary v = Vocabulary::reference();
  CHECK_THROWS_AS(NGramLM::fit(v, {encode_text(v, "a")}, 0), Error);
  CHECK_THROWS_AS(NGramLM::fit(v, {}, 2), Error);
  CHECK_THROWS_AS(NGramLM::fit(v, {TokenSequence{{0, 2}}}, 2), Error);
}

TEST_CASE("file round trip") {
  const Vocabulary v = Vocabulary::reference();
  const std::vector<TokenSequence> corpus{encode_text(v, "ab cd"), encode_text(v, "abc"), encode_text(v, "dd a")};
  const NGramLM lm = NGramLM::fit(v, corpus, 3);
  TempDir dir("lm");
  const auto path = dir.path() / "lm.txt";
  lm.save(path, v);

  std::ifstream in(path);
  std::string header, line, prev;
  std::getline(in, header);
  CHECK(header == "SGEML1 n=3");
  int lines = 0;
  bool sorted = true;
  while (std::getline(in, line)) {
    sorted = sorted && (lines == 0 || prev <= line);
    prev = line;
    ++lines;
  }
  CHECK(sorted);
  CHECK(lines == static_cast<int>((lm.context_count() + 1) * 14));

  const NGramLM back = NGramLM::load(path, v);
  CHECK(back.order() == 3);
  CHECK(back.context_count() == lm.context_count());
  Rng rng(2);
  for (int n = 0; n < 100; ++n) {
    TokenSequence ctx;
    for (int i = rng.integer(0, 3); i > 0; --i) ctx.ids.push_back(rng.integer(1, 5));
    CHECK((back.score_next(ctx) - lm.score_next(ctx)).cwiseAbs().maxCoeff() < 1e-12);
  }

  const Vocabulary other({"<blank>", "|", "x", "y"}, 0);
  CHECK(error_message([&] { (void)NGramLM::load(path, other); }).starts_with("vocabulary size mismatch"));
  std::ofstream(dir.path() / "bad.txt") << "ARPA\n";
  CHECK_THROWS_AS((void)NGramLM::load(dir.path() / "bad.txt", v), Error);
}
