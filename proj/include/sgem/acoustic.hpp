#pragma once

#include "sgem/core.hpp"
#include "sgem/params.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sgem {

inline constexpr const char* kFeatureExtractor = "feature_extractor";
inline constexpr const char* kEncoder = "encoder";
inline constexpr const char* kDecoder = "decoder";
inline constexpr const char* kHead = "head";

/// Groups adapted when a config does not name any: the convolutional front
/// end for frame-synchronous models, the encoder for autoregressive ones.
std::vector<std::string> default_trainable_groups(ModelMode mode);

struct ModelDims {
  int feature_dim = 16;
  int conv_channels = 32;
  int kernel = 5;
  int stride = 2;
  int hidden = 32;  // per recurrent direction
  int vocab_size = 14;
  int embed_dim = 16;        // autoregressive only
  int decoder_hidden = 48;   // autoregressive only

  bool operator==(const ModelDims&) const = default;
};

/// Intermediate activations of one forward pass, kept for backward().
struct ForwardRecord {
  ModelMode mode = ModelMode::frame_synchronous;
  // encoder
  Matrix windows;     // L x (kernel * feature_dim), zero-padded input patches
  Matrix conv_out;    // L x conv_channels
  Matrix fwd_states;  // L x hidden
  Matrix bwd_states;  // L x hidden
  Matrix encoded;     // L x 2*hidden
  // decoder (teacher forcing)
  std::vector<int> inputs;  // previous token per step, blank = start
  Matrix dec_states;        // S x decoder_hidden
  Matrix contexts;          // S x 2*hidden
  Matrix attention;         // S x L
  Matrix queries;           // S x 2*hidden
  // readout
  Matrix readout;  // rows x head input width
  LogitMatrix logits;
};

struct GradientResult {
  ParameterSet grads;
  /// Every returned gradient entry is exactly zero.
  bool zero_gradient = false;
};

/// Full copy of the parameters.
struct ModelSnapshot {
  ParameterSet params;
};

/// Incremental autoregressive decoding state.
struct DecoderState {
  RowVector state;
  RowVector context;
};

/// Reference acoustic models.
///
/// Frame-synchronous: strided temporal convolution (feature_extractor), one
/// bidirectional tanh recurrent layer (encoder), affine projection with
/// log-softmax (head). Autoregressive: the same front end plus a recurrent
/// decoder with token embedding and bilinear attention (decoder); the head
/// reads the decoder state and attention context. In autoregressive mode the
/// blank slot is the end-of-sequence symbol and the start symbol.
class AcousticModel {
 public:
  AcousticModel(ModelDims dims, Vocabulary vocab, ModelMode mode, std::uint64_t seed);
  /// Infers the architecture from array shapes.
  AcousticModel(Vocabulary vocab, ParameterSet params);

  [[nodiscard]] ModelMode mode() const { return mode_; }
  [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] const ModelDims& dims() const { return dims_; }
  [[nodiscard]] const ParameterSet& params() const { return params_; }
  [[nodiscard]] ParameterSet& params() { return params_; }
  [[nodiscard]] std::vector<std::string> group_names() const;

  [[nodiscard]] int output_frames(int input_frames) const;

  /// L x C normalized frame logits (frame-synchronous models only).
  [[nodiscard]] LogitMatrix forward_frames(const Utterance& utt) const;
  [[nodiscard]] ForwardRecord forward_frames_record(const Utterance& utt) const;

  /// Encoder pass only; the record's `encoded` feeds step().
  [[nodiscard]] ForwardRecord encode(const Utterance& utt) const;
  [[nodiscard]] DecoderState initial_state() const;
  /// Advances the decoder by one token and returns log p(next | prefix, x).
  [[nodiscard]] RowVector step(const ForwardRecord& encoded, DecoderState& state, int prev_token) const;
  /// log p_AM(y_i | prefix, x) for every next token.
  [[nodiscard]] RowVector score_step(const Utterance& utt, const TokenSequence& prefix) const;
  /// Teacher-forced readout: |target| rows, plus the end-of-sequence row when
  /// `include_end`.
  [[nodiscard]] ForwardRecord teacher_force(const Utterance& utt, const TokenSequence& target,
                                            bool include_end) const;

  /// Gradients of a scalar loss given d loss / d record.logits, restricted to
  /// `groups`.
  [[nodiscard]] GradientResult backward(const ForwardRecord& record, const Matrix& d_logits,
                                        const std::vector<std::string>& groups) const;

  [[nodiscard]] ModelSnapshot snapshot() const { return {params_}; }
  void restore(const ModelSnapshot& snap);

  /// Rounds every parameter to the nearest float, matching checkpoint storage.
  void round_to_float();

 private:
  void encode_into(const Utterance& utt, ForwardRecord& rec) const;
  void check_features(const Utterance& utt) const;
  void check_finite(const Matrix& m) const;

  ModelDims dims_;
  Vocabulary vocab_;
  ModelMode mode_;
  ParameterSet params_;
};

/// Binary checkpoint: magic "SGEMC1", then per array: u32 group-name length,
/// group name, u32 array-name length, array name, u32 rank, u32 dims,
/// f32 payload (row-major). Integers and floats little-endian.
void save_checkpoint(const AcousticModel& model, const std::filesystem::path& path);
AcousticModel load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab);
ParameterSet read_checkpoint_arrays(const std::filesystem::path& path);

}  // namespace sgem
