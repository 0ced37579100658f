#pragma once

// Task heads: the MLP segmentation decoder over encoder depth taps, dense
// classification/regression heads, and the weather-vector projector.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "geovit/config.hpp"
#include "geovit/layers.hpp"

namespace geovit::heads {

/// Tokens snapshotted after selected encoder blocks, keyed by 1-based depth.
template <typename T>
using TapMap = std::map<std::size_t, Tensor<T>>;

/// Projects each tap to the decoder width, concatenates the taps along
/// channels, fuses them with a linear layer, classifies every token and
/// bilinearly upsamples the class grid back to image resolution.
template <typename T>
class SegDecoder {
 public:
  SegDecoder() = default;
  SegDecoder(ParamStore<T>& store, const std::string& prefix, const ModelConfig& config);

  /// taps: depth -> [.., n, d] with n == grid^2. Returns [.., classes, H, W].
  Tensor<T> operator()(const TapMap<T>& taps) const;

  nn::Linear<T>& tap_projection(std::size_t depth) { return tap_proj_.at(depth); }
  nn::Linear<T>& fuse() { return fuse_; }
  nn::Linear<T>& classify() { return classify_; }

 private:
  std::map<std::size_t, nn::Linear<T>> tap_proj_;
  nn::Linear<T> fuse_;
  nn::Linear<T> classify_;
  std::size_t grid_ = 0;
  std::size_t patch_ = 1;
};

enum class Activation { kGelu, kIdentity };

/// Two fully-connected layers with an activation in between.
template <typename T>
class DenseHead {
 public:
  DenseHead() = default;
  DenseHead(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
            Activation activation = Activation::kGelu);

  /// [.., in] -> [.., out]; outputs are raw (unnormalized) values.
  Tensor<T> operator()(const Tensor<T>& x) const;

  nn::Linear<T>& fc1() { return fc1_; }
  nn::Linear<T>& fc2() { return fc2_; }

 private:
  nn::Linear<T> fc1_, fc2_;
  Activation activation_ = Activation::kGelu;
};

/// Linear map of a (temperature, humidity, wind) vector into token space.
template <typename T>
class WeatherProjector {
 public:
  WeatherProjector() = default;
  WeatherProjector(ParamStore<T>& store, const std::string& prefix, std::size_t dim);

  /// [.., 3] -> [.., dim]; any other trailing length is a contract violation.
  Tensor<T> operator()(const Tensor<T>& weather) const;

  nn::Linear<T>& projection() { return proj_; }

 private:
  nn::Linear<T> proj_;
};

/// Arithmetic mean over the token axis: [.., n, d] -> [.., d].
template <typename T>
Tensor<T> mean_pool(const Tensor<T>& tokens);

}  // namespace geovit::heads
