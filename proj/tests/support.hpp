#pragma once

#include "sgem/acoustic.hpp"
#include "sgem/core.hpp"
#include "sgem/random.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <unistd.h>

namespace sgem::test {

/// Unnormalized scores in [-scale, scale].
inline Matrix random_scores(Rng& rng, int rows, int cols, double scale = 3.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

inline LogitMatrix random_logits(Rng& rng, int rows, int cols, double scale = 3.0) {
  return LogitMatrix::from_scores(random_scores(rng, rows, cols, scale));
}

inline Utterance random_utterance(Rng& rng, int frames, int dim, const std::string& id = "u") {
  Utterance u{id, Matrix(frames, dim), std::nullopt};
  for (Eigen::Index i = 0; i < u.features.size(); ++i) u.features.data()[i] = rng.normal();
  return u;
}

/// Blank at 0 followed by single letters; C in [2, 27].
inline Vocabulary tiny_vocabulary(int C) {
  std::vector<std::string> tokens{"<blank>"};
  for (int k = 1; k < C; ++k) tokens.push_back(std::string(1, static_cast<char>('a' + k - 1)));
  return Vocabulary(tokens, 0);
}

/// |a - n| / max(|a|, |n|, floor); the floor keeps exactly-zero gradients
/// from dividing by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of f around x[i].
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// Message of the sgem::Error thrown by f, or "" if nothing is thrown.
inline std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

/// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("sgem_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace sgem::test
