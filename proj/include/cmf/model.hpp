#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmf/error.hpp"
#include "cmf/layers.hpp"
#include "cmf/rng.hpp"
#include "cmf/tensor.hpp"

namespace cmf {

// The seven representation streams concatenated before the classification
// head, in aggregation order: cross-attention outputs per modality,
// self-attention outputs per modality, mid-level fusion, residual branches.
enum class Stream : unsigned {
  CrossAudio = 0,
  CrossText,
  SelfAudio,
  SelfText,
  Mid,
  ResidualAudio,
  ResidualText,
};

inline constexpr std::array<Stream, 7> kAllStreams = {
    Stream::CrossAudio, Stream::CrossText,    Stream::SelfAudio,
    Stream::SelfText,   Stream::Mid,          Stream::ResidualAudio,
    Stream::ResidualText};

inline const char* stream_name(Stream s) {
  switch (s) {
    case Stream::CrossAudio: return "cross_audio";
    case Stream::CrossText: return "cross_text";
    case Stream::SelfAudio: return "self_audio";
    case Stream::SelfText: return "self_text";
    case Stream::Mid: return "mid";
    case Stream::ResidualAudio: return "residual_audio";
    case Stream::ResidualText: return "residual_text";
  }
  return "?";
}

inline Stream stream_from_name(const std::string& name) {
  for (Stream s : kAllStreams)
    if (name == stream_name(s)) return s;
  throw ConfigError("unknown stream name '" + name + "'");
}

enum class Modality { Audio, Text };

struct ModelConfig {
  std::size_t d_audio_in = 12696;  // 6552 handcrafted + 6144 bottleneck
  std::size_t d_text_in = 4096;
  std::size_t d_model = 128;
  std::size_t n_sca_layers = 2;
  std::size_t ff_inner = 0;  // 0 -> d_model
  std::size_t n_classes = 7;
  std::size_t d_audio_lld = 6552;  // leading audio columns (handcrafted block)
  bool share_encoder_lstms = false;
  std::vector<Stream> streams{kAllStreams.begin(), kAllStreams.end()};
  std::uint64_t seed = 0;

  std::size_t ff_inner_dim() const { return ff_inner ? ff_inner : d_model; }

  bool has_stream(Stream s) const {
    for (Stream e : streams)
      if (e == s) return true;
    return false;
  }

  // Checks ranges and canonicalizes stream order to aggregation order.
  void validate() {
    if (d_audio_in == 0 || d_text_in == 0 || d_model == 0 || n_sca_layers == 0)
      throw ConfigError("model dimensions must be positive");
    if (d_model % 2 != 0)
      throw ConfigError("d_model must be even (split across LSTM directions)");
    if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
    if (streams.empty()) throw ConfigError("at least one stream must be enabled");
    std::vector<Stream> ordered;
    for (Stream s : kAllStreams)
      if (has_stream(s)) ordered.push_back(s);
    if (ordered.size() != streams.size())
      throw ConfigError("duplicate stream in model config");
    streams = std::move(ordered);
  }
};

// ---------------------------------------------------------------------------
// Attention building blocks
// ---------------------------------------------------------------------------

struct AttentionProjections {
  Tensor w_query;  // [d x d]
  Tensor w_key;    // [d x d]
  Tensor w_value;  // [d x d]

  AttentionProjections() = default;
  AttentionProjections(std::size_t d, Rng& rng)
      : w_query(xavier_uniform(d, d, rng)),
        w_key(xavier_uniform(d, d, rng)),
        w_value(xavier_uniform(d, d, rng)) {}

  void append_params(const std::string& prefix, ParamList& out) const {
    out.emplace_back(prefix + ".w_query", w_query);
    out.emplace_back(prefix + ".w_key", w_key);
    out.emplace_back(prefix + ".w_value", w_value);
  }
};

// Post-attention sublayers: residual layer-norm, feed-forward, final norm.
struct AttentionSublayers {
  LayerNormParams norm1;
  FeedForwardParams ff;
  LayerNormParams norm2;

  AttentionSublayers() = default;
  AttentionSublayers(std::size_t d, std::size_t inner, Rng& rng)
      : norm1(d), ff(d, inner, rng), norm2(d) {}

  void append_params(const std::string& prefix, ParamList& out) const {
    norm1.append_params(prefix + ".norm1", out);
    ff.append_params(prefix + ".ff", out);
    norm2.append_params(prefix + ".norm2", out);
  }
};

struct SelfAttentionLayer {
  AttentionProjections proj;
  AttentionSublayers sub;

  SelfAttentionLayer() = default;
  SelfAttentionLayer(std::size_t d, std::size_t inner, Rng& rng)
      : proj(d, rng), sub(d, inner, rng) {}

  void append_params(const std::string& prefix, ParamList& out) const {
    proj.append_params(prefix + ".proj", out);
    sub.append_params(prefix + ".sub", out);
  }
};

// One stacked cross-attention layer: independent projections per direction
// (audio queries over text keys/values and vice versa) plus per-modality
// sublayers.
struct CrossAttentionLayer {
  AttentionProjections audio_from_text;  // queries from audio
  AttentionProjections text_from_audio;  // queries from text
  AttentionSublayers audio_sub;
  AttentionSublayers text_sub;

  CrossAttentionLayer() = default;
  CrossAttentionLayer(std::size_t d, std::size_t inner, Rng& rng)
      : audio_from_text(d, rng),
        text_from_audio(d, rng),
        audio_sub(d, inner, rng),
        text_sub(d, inner, rng) {}

  void append_params(const std::string& prefix, ParamList& out) const {
    audio_from_text.append_params(prefix + ".audio_from_text", out);
    text_from_audio.append_params(prefix + ".text_from_audio", out);
    audio_sub.append_params(prefix + ".audio_sub", out);
    text_sub.append_params(prefix + ".text_sub", out);
  }
};

// Additive stand-in for -inf on padded key positions.
inline constexpr double kMaskedLogit = -1e9;

// softmax(q k^T / sqrt(d)) v with padded key columns masked out.
inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k,
                                   const Tensor& v, const Mask& key_mask) {
  detail::require_2d(q, "scaled_dot_attention");
  if (k.shape() != v.shape() || q.shape()[1] != k.shape()[1]) {
    throw ShapeError("scaled_dot_attention shapes incompatible: q " +
                     detail::shape_str(q.shape()) + ", k " +
                     detail::shape_str(k.shape()) + ", v " +
                     detail::shape_str(v.shape()));
  }
  if (key_mask.size() != k.shape()[0]) {
    throw ShapeError("scaled_dot_attention mask length " +
                     std::to_string(key_mask.size()) + " vs keys " +
                     detail::shape_str(k.shape()));
  }
  const std::size_t tq = q.shape()[0], tk = k.shape()[0];
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
  Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
  bool any_padding = false;
  for (auto m : key_mask) any_padding = any_padding || (m == 0);
  if (any_padding) {
    std::vector<double> bias(tq * tk, 0.0);
    for (std::size_t j = 0; j < tk; ++j)
      if (!key_mask[j])
        for (std::size_t i = 0; i < tq; ++i) bias[i * tk + j] = kMaskedLogit;
    scores = add(scores, Tensor::from_data({tq, tk}, std::move(bias)));
  }
  return matmul(softmax(scores, 1), v);
}

inline Tensor attention_propagate(const AttentionProjections& proj,
                                  const Tensor& h_query, const Tensor& h_kv,
                                  const Mask& key_mask) {
  Tensor q = matmul(h_query, transpose(proj.w_query));
  Tensor k = matmul(h_kv, transpose(proj.w_key));
  Tensor v = matmul(h_kv, transpose(proj.w_value));
  return scaled_dot_attention(q, k, v, key_mask);
}

// Cross-modal propagation: returns (audio-to-text view for the audio stream,
// text-to-audio view for the text stream) = (delta for audio, delta for text).
// The first element is the information the audio stream receives by querying
// text keys/values; the second is the converse.
inline std::pair<Tensor, Tensor> cross_attention_propagate(
    const CrossAttentionLayer& layer, const Tensor& h_audio,
    const Tensor& h_text, const Mask& mask) {
  Tensor audio_delta =
      attention_propagate(layer.audio_from_text, h_audio, h_text, mask);
  Tensor text_delta =
      attention_propagate(layer.text_from_audio, h_text, h_audio, mask);
  return {audio_delta, text_delta};
}

// LayerNorm(h + delta): the residual update after attention propagation.
inline Tensor residual_norm_update(const LayerNormParams& norm, const Tensor& h,
                                   const Tensor& delta) {
  if (h.shape() != delta.shape()) {
    throw ShapeError("residual_norm_update shapes differ: " +
                     detail::shape_str(h.shape()) + " vs " +
                     detail::shape_str(delta.shape()));
  }
  return layer_norm(norm, add(h, delta));
}

// LayerNorm(h + FeedForward(h)): the closing sublayer of each attention block.
inline Tensor attention_block_finish(const FeedForwardParams& ff,
                                     const LayerNormParams& norm,
                                     const Tensor& h) {
  return layer_norm(norm, add(h, feed_forward(ff, h)));
}

// Full self-attention block: propagation from the same modality, residual
// norm, then feed-forward norm.
inline Tensor self_attention_block(const SelfAttentionLayer& layer,
                                   const Tensor& h, const Mask& mask) {
  Tensor delta = attention_propagate(layer.proj, h, h, mask);
  Tensor after_norm = residual_norm_update(layer.sub.norm1, h, delta);
  return attention_block_finish(layer.sub.ff, layer.sub.norm2, after_norm);
}

// One stacked cross layer applied to both modality streams jointly.
inline std::pair<Tensor, Tensor> cross_attention_block(
    const CrossAttentionLayer& layer, const Tensor& h_audio,
    const Tensor& h_text, const Mask& mask) {
  auto [audio_delta, text_delta] =
      cross_attention_propagate(layer, h_audio, h_text, mask);
  Tensor audio_norm = residual_norm_update(layer.audio_sub.norm1, h_audio, audio_delta);
  Tensor text_norm = residual_norm_update(layer.text_sub.norm1, h_text, text_delta);
  return {attention_block_finish(layer.audio_sub.ff, layer.audio_sub.norm2, audio_norm),
          attention_block_finish(layer.text_sub.ff, layer.text_sub.norm2, text_norm)};
}

// ---------------------------------------------------------------------------
// Remaining branches
// ---------------------------------------------------------------------------

struct MidFusionParams {
  // Two stacked unidirectional LSTMs per modality (absent when the encoder
  // outputs are shared into the fusion branch).
  LSTMCellParams audio_l1, audio_l2;
  LSTMCellParams text_l1, text_l2;
  LSTMCellParams joint_fwd, joint_bwd;  // combining BiLSTM
  FeedForwardParams ff;
};

struct ResidualBranchParams {
  LinearLayer lin;
  LayerNormParams norm;

  ResidualBranchParams() = default;
  ResidualBranchParams(std::size_t d_in, std::size_t d_model, Rng& rng)
      : lin(d_in, d_model, rng), norm(d_model) {}

  void append_params(const std::string& prefix, ParamList& out) const {
    lin.append_params(prefix + ".lin", out);
    norm.append_params(prefix + ".norm", out);
  }
};

struct BiLstmParams {
  LSTMCellParams fwd, bwd;

  BiLstmParams() = default;
  BiLstmParams(std::size_t in, std::size_t hidden, Rng& rng)
      : fwd(in, hidden, rng), bwd(in, hidden, rng) {}

  Tensor forward(const Tensor& x, const Mask& mask) const {
    return bilstm_forward(fwd, bwd, x, mask);
  }

  void append_params(const std::string& prefix, ParamList& out) const {
    fwd.append_params(prefix + ".fwd", out);
    bwd.append_params(prefix + ".bwd", out);
  }
};

struct ScaOutputs {
  Tensor cross_audio, cross_text;
  Tensor self_audio, self_text;
};

// ---------------------------------------------------------------------------
// The full network
// ---------------------------------------------------------------------------

class FusionModel {
 public:
  explicit FusionModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const std::size_t d = cfg_.d_model;
    const std::size_t inner = cfg_.ff_inner_dim();
    const std::size_t half = d / 2;

    if (needs_audio_encoder())
      audio_encoder_.emplace(cfg_.d_audio_in, half, rng);
    if (needs_text_encoder())
      text_encoder_.emplace(cfg_.d_text_in, half, rng);

    if (needs_cross_stack())
      for (std::size_t l = 0; l < cfg_.n_sca_layers; ++l)
        cross_layers_.emplace_back(d, inner, rng);
    if (cfg_.has_stream(Stream::SelfAudio))
      for (std::size_t l = 0; l < cfg_.n_sca_layers; ++l)
        self_audio_layers_.emplace_back(d, inner, rng);
    if (cfg_.has_stream(Stream::SelfText))
      for (std::size_t l = 0; l < cfg_.n_sca_layers; ++l)
        self_text_layers_.emplace_back(d, inner, rng);

    if (cfg_.has_stream(Stream::Mid)) {
      MidFusionParams mid;
      if (!cfg_.share_encoder_lstms) {
        mid.audio_l1 = LSTMCellParams(cfg_.d_audio_in, d, rng);
        mid.audio_l2 = LSTMCellParams(d, d, rng);
        mid.text_l1 = LSTMCellParams(cfg_.d_text_in, d, rng);
        mid.text_l2 = LSTMCellParams(d, d, rng);
      }
      mid.joint_fwd = LSTMCellParams(2 * d, half, rng);
      mid.joint_bwd = LSTMCellParams(2 * d, half, rng);
      mid.ff = FeedForwardParams(d, inner, rng);
      mid_.emplace(std::move(mid));
    }

    if (cfg_.has_stream(Stream::ResidualAudio))
      residual_audio_.emplace(cfg_.d_audio_in, d, rng);
    if (cfg_.has_stream(Stream::ResidualText))
      residual_text_.emplace(cfg_.d_text_in, d, rng);

    head1_ = LinearLayer(aggregation_width(), d, rng);
    head2_ = LinearLayer(d, cfg_.n_classes, rng);
  }

  const ModelConfig& config() const { return cfg_; }

  std::size_t aggregation_width() const {
    return cfg_.streams.size() * cfg_.d_model;
  }

  // Per-modality BiLSTM encoders at model width.
  std::pair<Tensor, Tensor> encode(const Tensor& x_audio, const Tensor& x_text,
                                   const Mask& mask) const {
    check_inputs(x_audio, x_text, mask);
    if (!audio_encoder_ || !text_encoder_)
      throw ContractError("encoders not constructed for the enabled streams");
    return {audio_encoder_->forward(x_audio, mask),
            text_encoder_->forward(x_text, mask)};
  }

  // The stacked parallel self-/cross-attention unit. The cross branch updates
  // both modality streams jointly; the self branches run per modality from the
  // encoder outputs, in parallel with the cross branch.
  ScaOutputs sca_forward(const Tensor& h_audio, const Tensor& h_text,
                         const Mask& mask) const {
    ScaOutputs out;
    if (!cross_layers_.empty()) {
      Tensor a = h_audio, t = h_text;
      for (const auto& layer : cross_layers_)
        std::tie(a, t) = cross_attention_block(layer, a, t, mask);
      out.cross_audio = a;
      out.cross_text = t;
    }
    if (!self_audio_layers_.empty())
      out.self_audio = self_branch(Modality::Audio, h_audio, mask);
    if (!self_text_layers_.empty())
      out.self_text = self_branch(Modality::Text, h_text, mask);
    return out;
  }

  // Self-attention stack for one modality, starting from its encoder output.
  Tensor self_branch(Modality m, const Tensor& h, const Mask& mask) const {
    const auto& layers =
        m == Modality::Audio ? self_audio_layers_ : self_text_layers_;
    if (layers.empty())
      throw ContractError("self-attention branch not constructed");
    Tensor cur = h;
    for (const auto& layer : layers) cur = self_attention_block(layer, cur, mask);
    return cur;
  }

  // Mid-level fusion: per-modality stacked LSTMs (or the shared encoders),
  // featurewise concat, combining BiLSTM, feed-forward.
  Tensor mid_level_fusion(const Tensor& x_audio, const Tensor& x_text,
                          const Mask& mask) const {
    check_inputs(x_audio, x_text, mask);
    if (!mid_) throw ContractError("mid-fusion branch not constructed");
    Tensor a, t;
    if (cfg_.share_encoder_lstms) {
      std::tie(a, t) = encode(x_audio, x_text, mask);
    } else {
      a = lstm_forward(mid_->audio_l2, lstm_forward(mid_->audio_l1, x_audio, mask), mask);
      t = lstm_forward(mid_->text_l2, lstm_forward(mid_->text_l1, x_text, mask), mask);
    }
    return mid_from_modality_states(a, t, mask);
  }

  // LayerNorm(Linear(x)) from the raw modality features.
  Tensor residual_branch(Modality m, const Tensor& x) const {
    const auto& branch = m == Modality::Audio ? residual_audio_ : residual_text_;
    if (!branch) throw ContractError("residual branch not constructed");
    return layer_norm(branch->norm, branch->lin.forward(x));
  }

  // All enabled streams in aggregation order.
  std::vector<std::pair<Stream, Tensor>> compute_streams(
      const Tensor& x_audio, const Tensor& x_text, const Mask& mask) const {
    check_inputs(x_audio, x_text, mask);
    Tensor h_audio, h_text;
    if (audio_encoder_) h_audio = audio_encoder_->forward(x_audio, mask);
    if (text_encoder_) h_text = text_encoder_->forward(x_text, mask);

    std::optional<ScaOutputs> sca;
    auto sca_once = [&]() -> ScaOutputs& {
      if (!sca) sca = sca_forward(h_audio, h_text, mask);
      return *sca;
    };

    std::vector<std::pair<Stream, Tensor>> streams;
    for (Stream s : cfg_.streams) {
      try {
        switch (s) {
          case Stream::CrossAudio: streams.emplace_back(s, sca_once().cross_audio); break;
          case Stream::CrossText: streams.emplace_back(s, sca_once().cross_text); break;
          case Stream::SelfAudio: streams.emplace_back(s, sca_once().self_audio); break;
          case Stream::SelfText: streams.emplace_back(s, sca_once().self_text); break;
          case Stream::Mid:
            streams.emplace_back(s, mid_level_fusion(x_audio, x_text, mask));
            break;
          case Stream::ResidualAudio:
            streams.emplace_back(s, residual_branch(Modality::Audio, x_audio));
            break;
          case Stream::ResidualText:
            streams.emplace_back(s, residual_branch(Modality::Text, x_text));
            break;
        }
      } catch (const ShapeError& e) {
        throw ShapeError(std::string("stream ") + stream_name(s) + ": " + e.what());
      }
    }
    return streams;
  }

  // Classification head over an aggregation matrix [T x n_streams*d_model].
  Tensor classify(const Tensor& aggregated) const {
    return head2_.forward(relu(head1_.forward(aggregated)));
  }

  // Full forward pass to logits [T x n_classes]. Softmax is applied only
  // inside the loss and in prediction.
  Tensor forward(const Tensor& x_audio, const Tensor& x_text,
                 const Mask& mask) const {
    auto streams = compute_streams(x_audio, x_text, mask);
    std::vector<Tensor> parts;
    parts.reserve(streams.size());
    for (auto& [s, t] : streams) parts.push_back(t);
    return classify(concat(parts, 1));
  }

  ParamList named_parameters() const {
    ParamList out;
    if (audio_encoder_) audio_encoder_->append_params("encoder.audio", out);
    if (text_encoder_) text_encoder_->append_params("encoder.text", out);
    for (std::size_t l = 0; l < cross_layers_.size(); ++l)
      cross_layers_[l].append_params("sca.cross." + std::to_string(l), out);
    for (std::size_t l = 0; l < self_audio_layers_.size(); ++l)
      self_audio_layers_[l].append_params("sca.self_audio." + std::to_string(l), out);
    for (std::size_t l = 0; l < self_text_layers_.size(); ++l)
      self_text_layers_[l].append_params("sca.self_text." + std::to_string(l), out);
    if (mid_) {
      if (!cfg_.share_encoder_lstms) {
        mid_->audio_l1.append_params("mid.audio_l1", out);
        mid_->audio_l2.append_params("mid.audio_l2", out);
        mid_->text_l1.append_params("mid.text_l1", out);
        mid_->text_l2.append_params("mid.text_l2", out);
      }
      mid_->joint_fwd.append_params("mid.joint_fwd", out);
      mid_->joint_bwd.append_params("mid.joint_bwd", out);
      mid_->ff.append_params("mid.ff", out);
    }
    if (residual_audio_) residual_audio_->append_params("residual.audio", out);
    if (residual_text_) residual_text_->append_params("residual.text", out);
    head1_.append_params("head.lin1", out);
    head2_.append_params("head.lin2", out);
    return out;
  }

  void zero_grad() const {
    for (auto& [name, p] : named_parameters()) Tensor(p).zero_grad();
  }

 private:
  bool needs_cross_stack() const {
    return cfg_.has_stream(Stream::CrossAudio) || cfg_.has_stream(Stream::CrossText);
  }
  bool needs_audio_encoder() const {
    return needs_cross_stack() || cfg_.has_stream(Stream::SelfAudio) ||
           (cfg_.has_stream(Stream::Mid) && cfg_.share_encoder_lstms);
  }
  bool needs_text_encoder() const {
    return needs_cross_stack() || cfg_.has_stream(Stream::SelfText) ||
           (cfg_.has_stream(Stream::Mid) && cfg_.share_encoder_lstms);
  }

  void check_inputs(const Tensor& x_audio, const Tensor& x_text,
                    const Mask& mask) const {
    detail::require_2d(x_audio, "model forward (audio)");
    detail::require_2d(x_text, "model forward (text)");
    if (x_audio.shape()[0] != x_text.shape()[0]) {
      throw ShapeError("utterance counts differ between modalities: audio " +
                       detail::shape_str(x_audio.shape()) + " vs text " +
                       detail::shape_str(x_text.shape()));
    }
    if (x_audio.shape()[1] != cfg_.d_audio_in) {
      throw ShapeError("audio feature dim " + std::to_string(x_audio.shape()[1]) +
                       " does not match config d_audio_in " +
                       std::to_string(cfg_.d_audio_in));
    }
    if (x_text.shape()[1] != cfg_.d_text_in) {
      throw ShapeError("text feature dim " + std::to_string(x_text.shape()[1]) +
                       " does not match config d_text_in " +
                       std::to_string(cfg_.d_text_in));
    }
    if (mask.size() != x_audio.shape()[0]) {
      throw ShapeError("mask length " + std::to_string(mask.size()) +
                       " does not match sequence length " +
                       std::to_string(x_audio.shape()[0]));
    }
  }

  Tensor mid_from_modality_states(const Tensor& a, const Tensor& t,
                                  const Mask& mask) const {
    Tensor joint = bilstm_forward(mid_->joint_fwd, mid_->joint_bwd,
                                  concat(a, t, 1), mask);
    return feed_forward(mid_->ff, joint);
  }

  ModelConfig cfg_;
  std::optional<BiLstmParams> audio_encoder_;
  std::optional<BiLstmParams> text_encoder_;
  std::vector<CrossAttentionLayer> cross_layers_;
  std::vector<SelfAttentionLayer> self_audio_layers_;
  std::vector<SelfAttentionLayer> self_text_layers_;
  std::optional<MidFusionParams> mid_;
  std::optional<ResidualBranchParams> residual_audio_;
  std::optional<ResidualBranchParams> residual_text_;
  LinearLayer head1_;
  LinearLayer head2_;
};

}  // namespace cmf
