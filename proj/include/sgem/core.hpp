#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sgem {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-row mask; 1 = row contributes to a loss.
using RowMask = std::vector<std::uint8_t>;

enum class ModelMode { frame_synchronous, autoregressive };

std::string_view to_string(ModelMode mode);

// ─── Vocabulary ─────────────────────────────────────────────────────────────

/// Token inventory with a designated blank token.
///
/// The blank slot doubles as the sentence boundary in the language model and
/// as end-of-sequence for autoregressive readouts. The token named by
/// `word_delimiter()` separates words when rendering text.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, int blank_index);

  /// Blank at 0, word delimiter "|", then letters a..l (C = 14).
  static Vocabulary reference();

  [[nodiscard]] int size() const { return static_cast<int>(tokens_.size()); }
  [[nodiscard]] int blank_index() const { return blank_index_; }
  [[nodiscard]] const std::string& token(int id) const;
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }
  [[nodiscard]] std::optional<int> find(std::string_view token) const;
  /// Id of "|", if present.
  [[nodiscard]] std::optional<int> word_delimiter() const { return delimiter_; }

  bool operator==(const Vocabulary& other) const = default;

 private:
  std::vector<std::string> tokens_;
  int blank_index_;
  std::optional<int> delimiter_;
};

// ─── Sequences ──────────────────────────────────────────────────────────────

struct TokenSequence {
  std::vector<int> ids;

  [[nodiscard]] std::size_t size() const { return ids.size(); }
  [[nodiscard]] bool empty() const { return ids.empty(); }
  auto operator<=>(const TokenSequence&) const = default;
};

/// Text <-> tokens. Spaces map to the word delimiter; every other character
/// must be a single-character token.
TokenSequence encode_text(const Vocabulary& vocab, std::string_view text);
std::string decode_text(const Vocabulary& vocab, const TokenSequence& seq);

/// Throws unless every id is in range (and, if `collapsed`, not blank).
void check_sequence(const Vocabulary& vocab, const TokenSequence& seq, bool collapsed);

// ─── Utterance ──────────────────────────────────────────────────────────────

struct Utterance {
  std::string id;
  Matrix features;  // frames x feature_dim
  std::optional<std::string> reference;

  [[nodiscard]] int frames() const { return static_cast<int>(features.rows()); }
};

void check_utterance(const Vocabulary& vocab, const Utterance& utt);

// ─── Logits ─────────────────────────────────────────────────────────────────

struct LogitMatrix {
  Matrix values;  // L x C log-domain scores
  bool normalized = false;

  [[nodiscard]] int rows() const { return static_cast<int>(values.rows()); }
  [[nodiscard]] int cols() const { return static_cast<int>(values.cols()); }

  /// Row-wise log-softmax of `scores`.
  static LogitMatrix from_scores(const Matrix& scores);
};

/// Max deviation of any row's log-sum-exp from zero.
double max_normalization_error(const LogitMatrix& logits);

double log_sum_exp(const Eigen::Ref<const RowVector>& row);
double log_add_exp(double a, double b);

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const RowVector>& row);

// ─── Hypothesis ─────────────────────────────────────────────────────────────

struct Hypothesis {
  TokenSequence sequence;
  double am_score = 0.0;
  double lm_score = 0.0;
  double fused_score = 0.0;
  double lambda_lm = 0.0;
};

}  // namespace sgem
