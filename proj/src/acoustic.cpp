#include "sgem/acoustic.hpp"

#include "sgem/random.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace sgem {
namespace {

Matrix uniform_init(Rng& rng, int rows, int cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

RowVector softmax(const RowVector& v) {
  RowVector out = (v.array() - v.maxCoeff()).exp().matrix();
  return out / out.sum();
}

RowVector log_softmax(const RowVector& v) {
  RowVector out = v;
  out.array() -= log_sum_exp(v);
  return out;
}

Matrix tanh_grad(const Matrix& upstream, const Matrix& activation) {
  return (upstream.array() * (1.0 - activation.array().square())).matrix();
}

RowVector col_sum(const Matrix& m) { return m.colwise().sum(); }

}  // namespace

AcousticModel::AcousticModel(ModelDims dims, Vocabulary vocab, ModelMode mode, std::uint64_t seed)
    : dims_(dims), vocab_(std::move(vocab)), mode_(mode) {
  if (dims_.vocab_size != vocab_.size()) throw Error("vocabulary size mismatch");
  Rng rng(seed);
  const int D = dims_.feature_dim, K = dims_.kernel, Cc = dims_.conv_channels, H = dims_.hidden;
  const int C = dims_.vocab_size;

  params_.add(kFeatureExtractor, "conv.weight", uniform_init(rng, Cc, K * D, K * D));
  params_.add(kFeatureExtractor, "conv.bias", Matrix::Zero(1, Cc));
  for (const char* dir : {"rnn_fwd", "rnn_bwd"}) {
    const std::string p(dir);
    params_.add(kEncoder, p + ".w_in", uniform_init(rng, H, Cc, Cc));
    params_.add(kEncoder, p + ".w_rec", uniform_init(rng, H, H, H));
    params_.add(kEncoder, p + ".bias", Matrix::Zero(1, H));
  }
  int readout = 2 * H;
  if (mode_ == ModelMode::autoregressive) {
    const int E = dims_.embed_dim, Hd = dims_.decoder_hidden;
    params_.add(kDecoder, "embedding", uniform_init(rng, C, E, 1) * 0.5);
    params_.add(kDecoder, "w_in", uniform_init(rng, Hd, E, E));
    params_.add(kDecoder, "w_rec", uniform_init(rng, Hd, Hd, Hd));
    params_.add(kDecoder, "w_ctx", uniform_init(rng, Hd, 2 * H, 2 * H));
    params_.add(kDecoder, "bias", Matrix::Zero(1, Hd));
    params_.add(kDecoder, "attn", uniform_init(rng, 2 * H, Hd, Hd));
    readout = Hd + 2 * H;
  }
  params_.add(kHead, "proj.weight", uniform_init(rng, C, readout, readout));
  params_.add(kHead, "proj.bias", Matrix::Zero(1, C));
}

AcousticModel::AcousticModel(Vocabulary vocab, ParameterSet params)
    : vocab_(std::move(vocab)), params_(std::move(params)) {
  const Matrix& conv = params_.at(kFeatureExtractor, "conv.weight");
  dims_.conv_channels = static_cast<int>(conv.rows());
  if (conv.cols() % dims_.kernel != 0) throw Error("checkpoint conv.weight has unexpected width");
  dims_.feature_dim = static_cast<int>(conv.cols()) / dims_.kernel;
  dims_.hidden = static_cast<int>(params_.at(kEncoder, "rnn_fwd.w_rec").rows());
  dims_.vocab_size = static_cast<int>(params_.at(kHead, "proj.weight").rows());
  mode_ = params_.has_group(kDecoder) ? ModelMode::autoregressive : ModelMode::frame_synchronous;
  if (mode_ == ModelMode::autoregressive) {
    dims_.embed_dim = static_cast<int>(params_.at(kDecoder, "embedding").cols());
    dims_.decoder_hidden = static_cast<int>(params_.at(kDecoder, "w_rec").rows());
  }
  if (dims_.vocab_size != vocab_.size()) throw Error("vocabulary size mismatch");
  // Reject inconsistent shapes early by comparing with a freshly built model.
  const AcousticModel fresh(dims_, vocab_, mode_, 0);
  if (!fresh.params_.same_layout(params_)) throw Error("checkpoint layout does not match the reference architecture");
}

std::vector<std::string> default_trainable_groups(ModelMode mode) {
  return {mode == ModelMode::frame_synchronous ? kFeatureExtractor : kEncoder};
}

std::vector<std::string> AcousticModel::group_names() const {
  std::vector<std::string> names;
  for (const auto& g : params_.groups()) names.push_back(g.name);
  return names;
}

int AcousticModel::output_frames(int input_frames) const {
  return (input_frames + dims_.stride - 1) / dims_.stride;
}

void AcousticModel::check_features(const Utterance& utt) const {
  if (utt.features.rows() < 1) throw Error("utterance '" + utt.id + "' has no frames");
  if (utt.features.cols() != dims_.feature_dim) {
    throw Error("utterance '" + utt.id + "' has feature_dim " + std::to_string(utt.features.cols()) +
                ", model expects " + std::to_string(dims_.feature_dim));
  }
}

void AcousticModel::check_finite(const Matrix& m) const {
  if (!m.allFinite()) throw Error("numerical overflow in forward pass");
}

void AcousticModel::encode_into(const Utterance& utt, ForwardRecord& rec) const {
  check_features(utt);
  const int T = utt.frames(), D = dims_.feature_dim, K = dims_.kernel, H = dims_.hidden;
  const int L = output_frames(T);

  rec.windows = Matrix::Zero(L, K * D);
  for (int t = 0; t < L; ++t) {
    const int center = t * dims_.stride;
    for (int k = 0; k < K; ++k) {
      const int src = center + k - K / 2;
      if (src >= 0 && src < T) rec.windows.block(t, k * D, 1, D) = utt.features.row(src);
    }
  }
  const Matrix& Wc = params_.at(kFeatureExtractor, "conv.weight");
  const Matrix& bc = params_.at(kFeatureExtractor, "conv.bias");
  rec.conv_out = ((rec.windows * Wc.transpose()).rowwise() + bc.row(0)).array().tanh().matrix();

  auto run = [&](const std::string& dir, Matrix& states, bool reverse) {
    const Matrix& Wi = params_.at(kEncoder, dir + ".w_in");
    const Matrix& Wr = params_.at(kEncoder, dir + ".w_rec");
    const Matrix& b = params_.at(kEncoder, dir + ".bias");
    const Matrix projected = (rec.conv_out * Wi.transpose()).rowwise() + b.row(0);
    states.resize(L, H);
    RowVector h = RowVector::Zero(H);
    for (int n = 0; n < L; ++n) {
      const int t = reverse ? L - 1 - n : n;
      h = (projected.row(t) + h * Wr.transpose()).array().tanh().matrix();
      states.row(t) = h;
    }
  };
  run("rnn_fwd", rec.fwd_states, false);
  run("rnn_bwd", rec.bwd_states, true);
  rec.encoded.resize(L, 2 * H);
  rec.encoded << rec.fwd_states, rec.bwd_states;
  check_finite(rec.encoded);
}

ForwardRecord AcousticModel::forward_frames_record(const Utterance& utt) const {
  if (mode_ != ModelMode::frame_synchronous) throw Error("forward_frames requires a frame-synchronous model");
  ForwardRecord rec;
  rec.mode = mode_;
  encode_into(utt, rec);
  rec.readout = rec.encoded;
  const Matrix& Wo = params_.at(kHead, "proj.weight");
  const Matrix& bo = params_.at(kHead, "proj.bias");
  const Matrix scores = (rec.readout * Wo.transpose()).rowwise() + bo.row(0);
  check_finite(scores);
  rec.logits = LogitMatrix::from_scores(scores);
  return rec;
}

LogitMatrix AcousticModel::forward_frames(const Utterance& utt) const {
  return forward_frames_record(utt).logits;
}

ForwardRecord AcousticModel::encode(const Utterance& utt) const {
  ForwardRecord rec;
  rec.mode = mode_;
  encode_into(utt, rec);
  return rec;
}

DecoderState AcousticModel::initial_state() const {
  return {RowVector::Zero(dims_.decoder_hidden), RowVector::Zero(2 * dims_.hidden)};
}

RowVector AcousticModel::step(const ForwardRecord& encoded, DecoderState& state, int prev_token) const {
  if (mode_ != ModelMode::autoregressive) throw Error("step requires an autoregressive model");
  if (prev_token < 0 || prev_token >= dims_.vocab_size) throw Error("token id out of range");
  const Matrix& emb = params_.at(kDecoder, "embedding");
  const Matrix& Wi = params_.at(kDecoder, "w_in");
  const Matrix& Wr = params_.at(kDecoder, "w_rec");
  const Matrix& Wx = params_.at(kDecoder, "w_ctx");
  const Matrix& bd = params_.at(kDecoder, "bias");
  const Matrix& Wa = params_.at(kDecoder, "attn");
  const Matrix& Wo = params_.at(kHead, "proj.weight");
  const Matrix& bo = params_.at(kHead, "proj.bias");

  const RowVector pre = emb.row(prev_token) * Wi.transpose() + state.state * Wr.transpose() +
                        state.context * Wx.transpose() + bd.row(0);
  state.state = pre.array().tanh().matrix();
  const RowVector query = state.state * Wa.transpose();
  const RowVector weights = softmax((encoded.encoded * query.transpose()).transpose());
  state.context = weights * encoded.encoded;
  RowVector readout(state.state.size() + state.context.size());
  readout << state.state, state.context;
  const RowVector scores = readout * Wo.transpose() + bo.row(0);
  if (!scores.allFinite()) throw Error("numerical overflow in forward pass");
  return log_softmax(scores);
}

RowVector AcousticModel::score_step(const Utterance& utt, const TokenSequence& prefix) const {
  if (mode_ != ModelMode::autoregressive) throw Error("score_step requires an autoregressive model");
  for (int id : prefix.ids) {
    if (id == vocab_.blank_index()) throw Error("blank not in AR output space");
  }
  check_sequence(vocab_, prefix, true);
  const ForwardRecord enc = encode(utt);
  DecoderState state = initial_state();
  RowVector row = step(enc, state, vocab_.blank_index());
  for (int id : prefix.ids) row = step(enc, state, id);
  return row;
}

ForwardRecord AcousticModel::teacher_force(const Utterance& utt, const TokenSequence& target,
                                           bool include_end) const {
  if (mode_ != ModelMode::autoregressive) throw Error("teacher_force requires an autoregressive model");
  for (int id : target.ids) {
    if (id == vocab_.blank_index()) throw Error("blank not in AR output space");
  }
  check_sequence(vocab_, target, true);
  ForwardRecord rec;
  rec.mode = mode_;
  encode_into(utt, rec);

  const int S = static_cast<int>(target.size()) + (include_end ? 1 : 0);
  const int L = static_cast<int>(rec.encoded.rows());
  const int Hd = dims_.decoder_hidden, E2 = 2 * dims_.hidden;
  rec.inputs.assign(1, vocab_.blank_index());
  for (int i = 0; i + 1 < S; ++i) rec.inputs.push_back(target.ids[static_cast<std::size_t>(i)]);
  rec.inputs.resize(static_cast<std::size_t>(S));
  rec.dec_states.resize(S, Hd);
  rec.contexts.resize(S, E2);
  rec.attention.resize(S, L);
  rec.queries.resize(S, E2);
  rec.readout.resize(S, Hd + E2);
  Matrix scores(S, dims_.vocab_size);

  const Matrix& Wa = params_.at(kDecoder, "attn");
  const Matrix& Wo = params_.at(kHead, "proj.weight");
  const Matrix& bo = params_.at(kHead, "proj.bias");
  DecoderState state = initial_state();
  for (int i = 0; i < S; ++i) {
    // step() recomputes the same quantities; the cached copies feed backward().
    (void)step(rec, state, rec.inputs[static_cast<std::size_t>(i)]);
    rec.dec_states.row(i) = state.state;
    rec.contexts.row(i) = state.context;
    rec.queries.row(i) = state.state * Wa.transpose();
    rec.attention.row(i) = softmax((rec.encoded * rec.queries.row(i).transpose()).transpose());
    rec.readout.row(i) << state.state, state.context;
    scores.row(i) = rec.readout.row(i) * Wo.transpose() + bo.row(0);
  }
  check_finite(scores);
  rec.logits = LogitMatrix::from_scores(scores);
  return rec;
}

GradientResult AcousticModel::backward(const ForwardRecord& rec, const Matrix& d_logits,
                                       const std::vector<std::string>& groups) const {
  if (d_logits.rows() != rec.logits.rows() || d_logits.cols() != rec.logits.cols()) {
    throw Error("gradient shape differs from recorded logits");
  }
  ParameterSet grads = params_.zeros_like();
  const int H = dims_.hidden;
  const int L = static_cast<int>(rec.encoded.rows());

  // log-softmax
  const Matrix probs = rec.logits.values.array().exp().matrix();
  const Vector row_sums = d_logits.rowwise().sum();
  const Matrix d_scores = d_logits - (probs.array().colwise() * row_sums.array()).matrix();

  const Matrix& Wo = params_.at(kHead, "proj.weight");
  grads.at(kHead, "proj.weight") = d_scores.transpose() * rec.readout;
  grads.at(kHead, "proj.bias") = col_sum(d_scores);
  const Matrix d_readout = d_scores * Wo;

  Matrix d_encoded;
  if (rec.mode == ModelMode::frame_synchronous) {
    d_encoded = d_readout;
  } else {
    const int S = static_cast<int>(rec.dec_states.rows());
    const int Hd = dims_.decoder_hidden;
    const Matrix& emb = params_.at(kDecoder, "embedding");
    const Matrix& Wi = params_.at(kDecoder, "w_in");
    const Matrix& Wr = params_.at(kDecoder, "w_rec");
    const Matrix& Wx = params_.at(kDecoder, "w_ctx");
    const Matrix& Wa = params_.at(kDecoder, "attn");
    Matrix& g_emb = grads.at(kDecoder, "embedding");
    Matrix& g_wi = grads.at(kDecoder, "w_in");
    Matrix& g_wr = grads.at(kDecoder, "w_rec");
    Matrix& g_wx = grads.at(kDecoder, "w_ctx");
    Matrix& g_b = grads.at(kDecoder, "bias");
    Matrix& g_wa = grads.at(kDecoder, "attn");

    d_encoded = Matrix::Zero(L, 2 * H);
    RowVector carry_state = RowVector::Zero(Hd);
    RowVector carry_context = RowVector::Zero(2 * H);
    for (int i = S - 1; i >= 0; --i) {
      RowVector d_state = d_readout.row(i).head(Hd) + carry_state;
      const RowVector d_context = d_readout.row(i).tail(2 * H) + carry_context;

      // context = attention weights x encoded
      const RowVector a = rec.attention.row(i);
      d_encoded += a.transpose() * d_context;
      const RowVector d_a = (rec.encoded * d_context.transpose()).transpose();
      const RowVector d_e = (a.array() * (d_a.array() - a.dot(d_a))).matrix();
      const RowVector d_query = d_e * rec.encoded;
      d_encoded += d_e.transpose() * rec.queries.row(i);
      g_wa += d_query.transpose() * rec.dec_states.row(i);
      d_state += d_query * Wa;

      const RowVector s = rec.dec_states.row(i);
      const RowVector d_pre = (d_state.array() * (1.0 - s.array().square())).matrix();
      const int prev = rec.inputs[static_cast<std::size_t>(i)];
      g_wi += d_pre.transpose() * emb.row(prev);
      g_emb.row(prev) += d_pre * Wi;
      g_b += d_pre;
      if (i > 0) {
        g_wr += d_pre.transpose() * rec.dec_states.row(i - 1);
        g_wx += d_pre.transpose() * rec.contexts.row(i - 1);
      }
      carry_state = d_pre * Wr;
      carry_context = d_pre * Wx;
    }
  }

  // bidirectional recurrence
  Matrix d_conv = Matrix::Zero(L, dims_.conv_channels);
  auto rnn_back = [&](const std::string& dir, const Matrix& states, const Matrix& d_states, bool reverse) {
    const Matrix& Wi = params_.at(kEncoder, dir + ".w_in");
    const Matrix& Wr = params_.at(kEncoder, dir + ".w_rec");
    Matrix d_pre(L, H);
    Matrix prev_states = Matrix::Zero(L, H);
    RowVector carry = RowVector::Zero(H);
    for (int n = 0; n < L; ++n) {
      // visit in reverse processing order
      const int t = reverse ? n : L - 1 - n;
      const int before = reverse ? t + 1 : t - 1;
      if (before >= 0 && before < L) prev_states.row(t) = states.row(before);
      const RowVector dh = d_states.row(t) + carry;
      d_pre.row(t) = (dh.array() * (1.0 - states.row(t).array().square())).matrix();
      carry = d_pre.row(t) * Wr;
    }
    grads.at(kEncoder, dir + ".w_in") = d_pre.transpose() * rec.conv_out;
    grads.at(kEncoder, dir + ".w_rec") = d_pre.transpose() * prev_states;
    grads.at(kEncoder, dir + ".bias") = col_sum(d_pre);
    d_conv += d_pre * Wi;
  };
  rnn_back("rnn_fwd", rec.fwd_states, d_encoded.leftCols(H), false);
  rnn_back("rnn_bwd", rec.bwd_states, d_encoded.rightCols(H), true);

  const Matrix d_conv_pre = tanh_grad(d_conv, rec.conv_out);
  grads.at(kFeatureExtractor, "conv.weight") = d_conv_pre.transpose() * rec.windows;
  grads.at(kFeatureExtractor, "conv.bias") = col_sum(d_conv_pre);

  GradientResult out{grads.subset(groups), true};
  out.grads.for_each([&](const std::string&, const std::string&, const Matrix& m) {
    if (!m.isZero(0.0)) out.zero_gradient = false;
  });
  return out;
}

void AcousticModel::restore(const ModelSnapshot& snap) {
  if (!snap.params.same_layout(params_)) throw Error("snapshot shape mismatch");
  params_ = snap.params;
}

void AcousticModel::round_to_float() {
  params_.for_each([](const std::string&, const std::string&, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
    }
  });
}

// ─── Checkpoint I/O ─────────────────────────────────────────────────────────

namespace {

constexpr char kCheckpointMagic[] = "SGEMC1";

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  std::uint32_t n = 0;
  if (!get_u32(in, n) || n > (1u << 20)) throw Error("truncated checkpoint");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw Error("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const AcousticModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 6);
  model.params().for_each([&](const std::string& group, const std::string& name, const Matrix& m) {
    put_string(out, group);
    put_string(out, name);
    if (m.rows() == 1) {
      put_u32(out, 1);
      put_u32(out, static_cast<std::uint32_t>(m.cols()));
    } else {
      put_u32(out, 2);
      put_u32(out, static_cast<std::uint32_t>(m.rows()));
      put_u32(out, static_cast<std::uint32_t>(m.cols()));
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
    }
  });
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

ParameterSet read_checkpoint_arrays(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    throw Error("not an SGEMC1 checkpoint: " + path.string());
  }
  ParameterSet params;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::string group = get_string(in);
    const std::string name = get_string(in);
    std::uint32_t rank = 0;
    if (!get_u32(in, rank) || rank < 1 || rank > 2) throw Error("checkpoint array has unsupported rank");
    std::uint32_t dims[2] = {1, 1};
    for (std::uint32_t r = 0; r < rank; ++r) {
      if (!get_u32(in, dims[2 - rank + r])) throw Error("truncated checkpoint");
    }
    Matrix m(dims[0], dims[1]);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::uint32_t bits = 0;
      if (!get_u32(in, bits)) throw Error("truncated checkpoint");
      m.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    params.add(group, name, std::move(m));
  }
  return params;
}

AcousticModel load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab) {
  ParameterSet params = read_checkpoint_arrays(path);
  const int C = static_cast<int>(params.at(kHead, "proj.weight").rows());
  if (C != vocab.size()) {
    throw Error("vocabulary size mismatch: checkpoint has " + std::to_string(C) + ", vocabulary has " +
                std::to_string(vocab.size()));
  }
  return AcousticModel(vocab, std::move(params));
}

}  // namespace sgem
