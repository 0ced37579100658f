#pragma once

// The transformer encoder and the two end-to-end model variants.
//
// CO2: S2 image -> patch embed + positions, weather vector appended as one
//      extra token -> encoder -> {segmentation decoder over depth taps,
//      fuel classifier, power-rate regressor}.
// NO2: S2 and S5P images embedded by separate stems -> dual-stream encoder
//      where each block lets S2 tokens cross-attend to S5P tokens -> scalar
//      regressor over pooled S2 tokens.

#include <optional>
#include <string>
#include <vector>

#include "geovit/config.hpp"
#include "geovit/heads.hpp"
#include "geovit/layers.hpp"

namespace geovit {

template <typename T>
struct EncoderOutput {
  Tensor<T> final_tokens;          // spatial tokens after the last block
  heads::TapMap<T> taps;           // spatial tokens after each tap block
  std::optional<Tensor<T>> extra;  // final state of the appended token
};

/// Pre-norm transformer block: x + SA(LN(x)), then x + FFN(LN(x)).
template <typename T>
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(ParamStore<T>& store, const std::string& prefix, const ModelConfig& config);

  Tensor<T> operator()(const Tensor<T>& x) const;

  nn::MultiHeadAttention<T>& attention() { return attn_; }
  nn::FeedForward<T>& feed_forward() { return ffn_; }

 private:
  nn::LayerNorm<T> ln_attn_, ln_ffn_;
  nn::MultiHeadAttention<T> attn_;
  nn::FeedForward<T> ffn_;
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamStore<T>& store, const std::string& prefix, const ModelConfig& config);

  /// tokens [.., n, d] (already position-encoded); `extra` [.., d] is
  /// appended as token n and excluded from every tap.
  EncoderOutput<T> encode(const Tensor<T>& tokens, const Tensor<T>* extra = nullptr) const;

  std::size_t depth() const { return blocks_.size(); }
  EncoderBlock<T>& block(std::size_t i) { return blocks_.at(i); }

 private:
  std::vector<EncoderBlock<T>> blocks_;
  std::vector<std::size_t> tap_depths_;
};

/// NO2 block. The S5P stream is updated first by its own self-attention and
/// FFN; the S2 stream then runs self-attention, cross-attention with queries
/// from S2 and keys/values from the updated S5P tokens, and its FFN.
template <typename T>
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(ParamStore<T>& store, const std::string& prefix, const ModelConfig& config);

  void operator()(Tensor<T>& s2, Tensor<T>& s5p) const;

  nn::MultiHeadAttention<T>& cross_attention() { return cross_; }

 private:
  nn::LayerNorm<T> ln_s5p_attn_, ln_s5p_ffn_;
  nn::MultiHeadAttention<T> s5p_attn_;
  nn::FeedForward<T> s5p_ffn_;
  nn::LayerNorm<T> ln_attn_, ln_cross_q_, ln_cross_kv_, ln_ffn_;
  nn::MultiHeadAttention<T> attn_, cross_;
  nn::FeedForward<T> ffn_;
};

template <typename T>
class FusionEncoder {
 public:
  FusionEncoder() = default;
  FusionEncoder(ParamStore<T>& store, const std::string& prefix, const ModelConfig& config);

  /// Taps and final tokens refer to the S2 stream.
  EncoderOutput<T> encode(const Tensor<T>& s2_tokens, const Tensor<T>& s5p_tokens) const;

  FusionBlock<T>& block(std::size_t i) { return blocks_.at(i); }

 private:
  std::vector<FusionBlock<T>> blocks_;
  std::vector<std::size_t> tap_depths_;
};

template <typename T>
struct Co2Outputs {
  Tensor<T> seg_logits;   // [B, seg classes, H, W]
  Tensor<T> fuel_logits;  // [B, fuel classes]
  Tensor<T> power;        // [B]
};

template <typename T>
class Co2Model {
 public:
  explicit Co2Model(ModelConfig config);
  Co2Model(const Co2Model&) = delete;
  Co2Model& operator=(const Co2Model&) = delete;

  /// images [B, s2_bands, H, W], weather [B, 3].
  Co2Outputs<T> forward(const Tensor<T>& images, const Tensor<T>& weather) const;
  /// Encoder pass only, exposing taps and the final weather token.
  EncoderOutput<T> encode(const Tensor<T>& images, const Tensor<T>& weather) const;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  Encoder<T>& encoder() { return encoder_; }
  heads::SegDecoder<T>& decoder() { return decoder_; }

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  nn::PatchEmbedder<T> embed_;
  nn::PositionalEmbedding<T> pos_;
  heads::WeatherProjector<T> weather_;
  Encoder<T> encoder_;
  heads::SegDecoder<T> decoder_;
  heads::DenseHead<T> fuel_head_;
  heads::DenseHead<T> power_head_;
};

template <typename T>
class No2Model {
 public:
  explicit No2Model(ModelConfig config);
  No2Model(const No2Model&) = delete;
  No2Model& operator=(const No2Model&) = delete;

  /// s2 [B, s2_bands, H, W], s5p [B, s5p_bands, H, W] -> [B].
  Tensor<T> forward(const Tensor<T>& s2, const Tensor<T>& s5p) const;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  FusionEncoder<T>& encoder() { return encoder_; }

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  nn::PatchEmbedder<T> s2_embed_, s5p_embed_;
  nn::PositionalEmbedding<T> s2_pos_, s5p_pos_;
  FusionEncoder<T> encoder_;
  heads::DenseHead<T> head_;
};

}  // namespace geovit
