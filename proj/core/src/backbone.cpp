#include "geovit/backbone.hpp"

#include <algorithm>
#include <array>

#include "geovit/errors.hpp"

namespace geovit {
namespace {

template <typename T>
void check_images(const Tensor<T>& images, std::size_t bands, const ModelConfig& c, const char* what) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != bands || s[2] != c.image_size || s[3] != c.image_size) {
    throw ConfigError(std::string(what) + ": expected [B, " + std::to_string(bands) + ", " +
                      std::to_string(c.image_size) + ", " + std::to_string(c.image_size) + "], got " +
                      shape_to_string(s));
  }
}

bool is_tap(const std::vector<std::size_t>& taps, std::size_t depth) {
  return std::find(taps.begin(), taps.end(), depth) != taps.end();
}

}  // namespace

template <typename T>
EncoderBlock<T>::EncoderBlock(ParamStore<T>& store, const std::string& prefix, const ModelConfig& c)
    : ln_attn_(store, prefix + ".ln_attn", c.embed_dim, static_cast<T>(c.layer_norm_eps)),
      ln_ffn_(store, prefix + ".ln_ffn", c.embed_dim, static_cast<T>(c.layer_norm_eps)),
      attn_(store, prefix + ".attn", c.embed_dim, c.num_heads),
      ffn_(store, prefix + ".ffn", c.embed_dim, c.ffn_ratio) {}

template <typename T>
Tensor<T> EncoderBlock<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = add(x, attn_.self_attention(ln_attn_(x)));
  return add(h, ffn_(ln_ffn_(h)));
}

template <typename T>
Encoder<T>::Encoder(ParamStore<T>& store, const std::string& prefix, const ModelConfig& c)
    : tap_depths_(c.tap_depths) {
  c.validate();
  for (std::size_t i = 0; i < c.depth; ++i) blocks_.emplace_back(store, prefix + ".block" + std::to_string(i), c);
}

template <typename T>
EncoderOutput<T> Encoder<T>::encode(const Tensor<T>& tokens, const Tensor<T>* extra) const {
  if (tokens.rank() < 2) throw DimensionError("encode: expected [.., n, d], got " + shape_to_string(tokens.shape()));
  const std::size_t token_axis = tokens.rank() - 2;
  const std::size_t n = tokens.shape()[token_axis];
  Tensor<T> x = tokens;
  if (extra) {
    Shape s = tokens.shape();
    s[token_axis] = 1;
    if (extra->numel() != shape_numel(s)) {
      throw DimensionError("encode: extra token " + shape_to_string(extra->shape()) + " incompatible with tokens " +
                           shape_to_string(tokens.shape()));
    }
    const std::array<Tensor<T>, 2> parts{tokens, reshape(*extra, s)};
    x = concat(std::span<const Tensor<T>>(parts), token_axis);
  }
  auto spatial = [&](const Tensor<T>& t) { return extra ? slice(t, token_axis, 0, n) : t; };

  EncoderOutput<T> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i](x);
    if (is_tap(tap_depths_, i + 1)) out.taps.emplace(i + 1, spatial(x));
  }
  out.final_tokens = out.taps.count(blocks_.size()) ? out.taps.at(blocks_.size()) : spatial(x);
  if (extra) {
    out.extra = reshape(slice(x, token_axis, n, n + 1), extra->shape());
  }
  return out;
}

template <typename T>
FusionBlock<T>::FusionBlock(ParamStore<T>& store, const std::string& prefix, const ModelConfig& c)
    : ln_s5p_attn_(store, prefix + ".s5p.ln_attn", c.embed_dim, static_cast<T>(c.layer_norm_eps)),
      ln_s5p_ffn_(store, prefix + ".s5p.ln_ffn", c.embed_dim, static_cast<T>(c.layer_norm_eps)),
      s5p_attn_(store, prefix + ".s5p.attn", c.embed_dim, c.num_heads),
      s5p_ffn_(store, prefix + ".s5p.ffn", c.embed_dim, c.ffn_ratio),
      ln_attn_(store, prefix + ".s2.ln_attn", c.embed_dim, static_cast<T>(c.layer_norm_eps)),
      ln_cross_q_(store, prefix + ".s2.ln_cross_q", c.embed_dim, static_cast<T>(c.layer_norm_eps)),
      ln_cross_kv_(store, prefix + ".s2.ln_cross_kv", c.embed_dim, static_cast<T>(c.layer_norm_eps)),
      ln_ffn_(store, prefix + ".s2.ln_ffn", c.embed_dim, static_cast<T>(c.layer_norm_eps)),
      attn_(store, prefix + ".s2.attn", c.embed_dim, c.num_heads),
      cross_(store, prefix + ".s2.cross", c.embed_dim, c.num_heads),
      ffn_(store, prefix + ".s2.ffn", c.embed_dim, c.ffn_ratio) {}

template <typename T>
void FusionBlock<T>::operator()(Tensor<T>& s2, Tensor<T>& s5p) const {
  s5p = add(s5p, s5p_attn_.self_attention(ln_s5p_attn_(s5p)));
  s5p = add(s5p, s5p_ffn_(ln_s5p_ffn_(s5p)));
  s2 = add(s2, attn_.self_attention(ln_attn_(s2)));
  s2 = add(s2, cross_.cross_attention(ln_cross_q_(s2), ln_cross_kv_(s5p)));
  s2 = add(s2, ffn_(ln_ffn_(s2)));
}

template <typename T>
FusionEncoder<T>::FusionEncoder(ParamStore<T>& store, const std::string& prefix, const ModelConfig& c)
    : tap_depths_(c.tap_depths) {
  c.validate();
  for (std::size_t i = 0; i < c.depth; ++i) blocks_.emplace_back(store, prefix + ".block" + std::to_string(i), c);
}

template <typename T>
EncoderOutput<T> FusionEncoder<T>::encode(const Tensor<T>& s2_tokens, const Tensor<T>& s5p_tokens) const {
  if (s2_tokens.shape().back() != s5p_tokens.shape().back()) {
    throw DimensionError("fusion encode: embed dims differ, " + shape_to_string(s2_tokens.shape()) + " vs " +
                         shape_to_string(s5p_tokens.shape()));
  }
  Tensor<T> s2 = s2_tokens, s5p = s5p_tokens;
  EncoderOutput<T> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i](s2, s5p);
    if (is_tap(tap_depths_, i + 1)) out.taps.emplace(i + 1, s2);
  }
  out.final_tokens = s2;
  return out;
}

template <typename T>
Co2Model<T>::Co2Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.variant != Variant::kCo2) throw ConfigError("Co2Model requires variant co2");
  const ModelConfig& c = config_;
  embed_ = nn::PatchEmbedder<T>(store_, "embed", c.s2_bands, c.patch_size, c.embed_dim);
  pos_ = nn::PositionalEmbedding<T>(store_, "pos", c.num_tokens(), c.embed_dim);
  weather_ = heads::WeatherProjector<T>(store_, "weather", c.embed_dim);
  encoder_ = Encoder<T>(store_, "encoder", c);
  decoder_ = heads::SegDecoder<T>(store_, "decoder", c);
  fuel_head_ = heads::DenseHead<T>(store_, "fuel_head", 2 * c.embed_dim, c.head_hidden_width(), c.num_fuel_classes);
  power_head_ = heads::DenseHead<T>(store_, "power_head", 2 * c.embed_dim, c.head_hidden_width(), 1);
}

template <typename T>
EncoderOutput<T> Co2Model<T>::encode(const Tensor<T>& images, const Tensor<T>& weather) const {
  check_images(images, config_.s2_bands, config_, "co2 forward images");
  const std::size_t batch = images.dim(0);
  if (weather.shape() != Shape{batch, kWeatherDim}) {
    throw ConfigError("co2 forward: weather must be [" + std::to_string(batch) + ", 3], got " +
                      shape_to_string(weather.shape()));
  }
  Tensor<T> tokens = pos_(embed_(images));
  Tensor<T> weather_token = weather_(weather);
  return encoder_.encode(tokens, &weather_token);
}

template <typename T>
Co2Outputs<T> Co2Model<T>::forward(const Tensor<T>& images, const Tensor<T>& weather) const {
  EncoderOutput<T> enc = encode(images, weather);
  Co2Outputs<T> out;
  out.seg_logits = decoder_(enc.taps);
  const std::array<Tensor<T>, 2> parts{heads::mean_pool(enc.final_tokens), *enc.extra};
  Tensor<T> pooled = concat(std::span<const Tensor<T>>(parts), 1);  // [B, 2d]
  out.fuel_logits = fuel_head_(pooled);
  out.power = reshape(power_head_(pooled), {images.dim(0)});
  return out;
}

template <typename T>
No2Model<T>::No2Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.variant != Variant::kNo2) throw ConfigError("No2Model requires variant no2");
  const ModelConfig& c = config_;
  s2_embed_ = nn::PatchEmbedder<T>(store_, "s2_embed", c.s2_bands, c.patch_size, c.embed_dim);
  s2_pos_ = nn::PositionalEmbedding<T>(store_, "s2_pos", c.num_tokens(), c.embed_dim);
  s5p_embed_ = nn::PatchEmbedder<T>(store_, "s5p_embed", c.s5p_bands, c.patch_size, c.embed_dim);
  s5p_pos_ = nn::PositionalEmbedding<T>(store_, "s5p_pos", c.num_tokens(), c.embed_dim);
  encoder_ = FusionEncoder<T>(store_, "encoder", c);
  head_ = heads::DenseHead<T>(store_, "no2_head", c.embed_dim, c.head_hidden_width(), 1);
}

template <typename T>
Tensor<T> No2Model<T>::forward(const Tensor<T>& s2, const Tensor<T>& s5p) const {
  check_images(s2, config_.s2_bands, config_, "no2 forward s2 image");
  check_images(s5p, config_.s5p_bands, config_, "no2 forward s5p image");
  if (s2.dim(0) != s5p.dim(0)) throw ConfigError("no2 forward: batch sizes of s2 and s5p differ");
  EncoderOutput<T> enc = encoder_.encode(s2_pos_(s2_embed_(s2)), s5p_pos_(s5p_embed_(s5p)));
  return reshape(head_(heads::mean_pool(enc.final_tokens)), {s2.dim(0)});
}

template class EncoderBlock<float>;
template class EncoderBlock<double>;
template class Encoder<float>;
template class Encoder<double>;
template class FusionBlock<float>;
template class FusionBlock<double>;
template class FusionEncoder<float>;
template class FusionEncoder<double>;
template class Co2Model<float>;
template class Co2Model<double>;
template class No2Model<float>;
template class No2Model<double>;

}  // namespace geovit
