#include "geovit/heads.hpp"

#include <array>

#include "geovit/errors.hpp"

namespace geovit::heads {

template <typename T>
SegDecoder<T>::SegDecoder(ParamStore<T>& store, const std::string& prefix, const ModelConfig& config)
    : grid_(config.grid_size()), patch_(config.patch_size) {
  for (std::size_t depth : config.tap_depths) {
    tap_proj_.emplace(depth, nn::Linear<T>(store, prefix + ".tap" + std::to_string(depth), config.embed_dim,
                                           config.decoder_dim));
  }
  fuse_ = nn::Linear<T>(store, prefix + ".fuse", config.tap_depths.size() * config.decoder_dim, config.decoder_dim);
  classify_ = nn::Linear<T>(store, prefix + ".classify", config.decoder_dim, config.num_seg_classes);
}

template <typename T>
Tensor<T> SegDecoder<T>::operator()(const TapMap<T>& taps) const {
  std::vector<Tensor<T>> projected;
  Shape lead_shape;
  for (const auto& [depth, proj] : tap_proj_) {
    auto it = taps.find(depth);
    if (it == taps.end()) throw ContractViolation("segmentation decoder: missing tap for depth " + std::to_string(depth));
    const Tensor<T>& tokens = it->second;
    if (tokens.rank() < 2 || tokens.shape()[tokens.rank() - 2] != grid_ * grid_) {
      throw ContractViolation("segmentation decoder: tap " + std::to_string(depth) + " has shape " +
                              shape_to_string(tokens.shape()) + ", expected " + std::to_string(grid_ * grid_) +
                              " spatial tokens");
    }
    lead_shape.assign(tokens.shape().begin(), tokens.shape().end() - 2);
    projected.push_back(proj(tokens));
  }
  Tensor<T> fused = fuse_(concat(std::span<const Tensor<T>>(projected), projected.front().rank() - 1));
  Tensor<T> logits = classify_(fused);  // [.., n, C]
  const std::size_t classes = logits.shape().back();
  const std::size_t lead = logits.numel() / (grid_ * grid_ * classes);
  static constexpr std::array<std::size_t, 3> kChannelsFirst{0, 2, 1};
  Tensor<T> grid = reshape(permute(reshape(logits, {lead, grid_ * grid_, classes}),
                                   std::span<const std::size_t>(kChannelsFirst)),
                           {lead, classes, grid_, grid_});
  Tensor<T> up = upsample_bilinear(grid, patch_);
  Shape out_shape = lead_shape;
  out_shape.insert(out_shape.end(), {classes, grid_ * patch_, grid_ * patch_});
  return reshape(up, std::move(out_shape));
}

template <typename T>
DenseHead<T>::DenseHead(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                        std::size_t out, Activation activation)
    : fc1_(store, prefix + ".fc1", in, hidden), fc2_(store, prefix + ".fc2", hidden, out), activation_(activation) {}

template <typename T>
Tensor<T> DenseHead<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = fc1_(x);
  if (activation_ == Activation::kGelu) h = gelu(h);
  return fc2_(h);
}

template <typename T>
WeatherProjector<T>::WeatherProjector(ParamStore<T>& store, const std::string& prefix, std::size_t dim)
    : proj_(store, prefix + ".proj", kWeatherDim, dim) {}

template <typename T>
Tensor<T> WeatherProjector<T>::operator()(const Tensor<T>& weather) const {
  if (weather.shape().back() != kWeatherDim) {
    throw ContractViolation("weather vector must have " + std::to_string(kWeatherDim) + " components, got shape " +
                            shape_to_string(weather.shape()));
  }
  return proj_(weather);
}

template <typename T>
Tensor<T> mean_pool(const Tensor<T>& tokens) {
  if (tokens.rank() < 2) throw DimensionError("mean_pool: expected [.., n, d], got " + shape_to_string(tokens.shape()));
  return mean(tokens, tokens.rank() - 2);
}

template class SegDecoder<float>;
template class SegDecoder<double>;
template class DenseHead<float>;
template class DenseHead<double>;
template class WeatherProjector<float>;
template class WeatherProjector<double>;
template Tensor<float> mean_pool(const Tensor<float>&);
template Tensor<double> mean_pool(const Tensor<double>&);

}  // namespace geovit::heads
