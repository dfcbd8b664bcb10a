#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sgem {

/// Every knob of the adaptation loop. Defaults are the published CTC-model
/// settings: N=10, T=2.5, tau=0.4/C, (eta_i, eta_f, B, lambda_lm, alpha,
/// lambda_ns) = (4e-5, 2e-5, 5, 0.3, 1.5, 1).
struct AdaptationConfig {
  int N = 10;
  double T = 2.5;
  double tau_scale = 0.4;
  double alpha = 1.5;
  double lambda_ns = 1.0;
  double lambda_lm = 0.3;
  int beam_width = 5;
  double eta_i = 4e-5;
  double eta_f = 2e-5;
  double weight_decay = 0.0;
  std::vector<std::string> trainable_groups{"feature_extractor"};
  bool use_beam_search = true;
  bool use_gem = true;
  bool use_ns = true;
  bool blank_mask_gem = true;
  bool blank_mask_ns = false;
  bool reacquire_every_step = true;
  std::uint64_t seed = 0;

  /// Negative-class threshold for a vocabulary of size C.
  [[nodiscard]] double tau(int vocab_size) const { return tau_scale / vocab_size; }

  bool operator==(const AdaptationConfig&) const = default;
};

/// Published per-architecture settings.
AdaptationConfig preset_ctc();
AdaptationConfig preset_conformer();
AdaptationConfig preset_transducer();

/// Throws sgem::Error naming the first violated invariant; returns the config
/// unchanged otherwise. `allow_idle` accepts use_gem = use_ns = false with
/// N > 0, which the adaptation loop treats as a run without updates.
const AdaptationConfig& validate_config(const AdaptationConfig& config, bool allow_idle = false);

/// `key = value` lines, `#` comments. Keys not mentioned keep their defaults
/// from `base`.
AdaptationConfig parse_config(const std::string& text, AdaptationConfig base = {});
AdaptationConfig load_config(const std::filesystem::path& path, AdaptationConfig base = {});

/// Applies a single `key`, `value` pair; throws on unknown keys.
void set_config_field(AdaptationConfig& config, const std::string& key, const std::string& value);

std::string serialize_config(const AdaptationConfig& config);

}  // namespace sgem
