#include "geovit/augment.hpp"

#include <string>

#include "geovit/errors.hpp"

namespace geovit::train {

AugmentParams draw_augmentation(Rng& rng, const AugmentConfig& config) {
  AugmentParams p;
  if (config.crop) {
    p.pad = config.pad;
    p.offset_y = static_cast<std::size_t>(rng.below(2 * config.pad + 1));
    p.offset_x = static_cast<std::size_t>(rng.below(2 * config.pad + 1));
  }
  if (config.flip) p.flip = rng.bernoulli(config.flip_probability);
  if (config.photometric) {
    p.brightness = rng.uniform(config.brightness_min, config.brightness_max);
    p.contrast = rng.uniform(config.contrast_min, config.contrast_max);
  }
  return p;
}

namespace {

std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace

std::size_t augment_source_index(std::size_t y, std::size_t x, std::size_t n, const AugmentParams& p) {
  if (p.pad >= n) throw ContractViolation("augment: padding " + std::to_string(p.pad) + " too large for size " + std::to_string(n));
  const std::size_t cx = p.flip ? n - 1 - x : x;
  const auto sn = static_cast<std::ptrdiff_t>(n);
  const auto pad = static_cast<std::ptrdiff_t>(p.pad);
  const std::ptrdiff_t sy = reflect(static_cast<std::ptrdiff_t>(y + p.offset_y) - pad, sn);
  const std::ptrdiff_t sx = reflect(static_cast<std::ptrdiff_t>(cx + p.offset_x) - pad, sn);
  return static_cast<std::size_t>(sy) * n + static_cast<std::size_t>(sx);
}

namespace {

std::vector<std::size_t> source_map(std::size_t n, const AugmentParams& p) {
  std::vector<std::size_t> map(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) map[y * n + x] = augment_source_index(y, x, n, p);
  return map;
}

Tensor<float> transform_image(const Tensor<float>& image, const std::vector<std::size_t>& map, const AugmentParams& p,
                              bool photometric) {
  const std::size_t bands = image.dim(0), hw = map.size();
  const auto in = image.data();
  std::vector<float> out(in.size());
  photometric = photometric && (p.brightness != 1.0 || p.contrast != 1.0);
  for (std::size_t b = 0; b < bands; ++b) {
    const float* src = in.data() + b * hw;
    float* dst = out.data() + b * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[map[i]];
    if (photometric) {
      double mean = 0.0;
      for (std::size_t i = 0; i < hw; ++i) mean += dst[i];
      mean /= static_cast<double>(hw);
      for (std::size_t i = 0; i < hw; ++i) {
        dst[i] = static_cast<float>((dst[i] - mean) * p.contrast + mean * p.brightness);
      }
    }
  }
  return Tensor<float>(image.shape(), std::move(out));
}

}  // namespace

data::Sample apply_augmentation(const data::Sample& sample, const AugmentParams& params) {
  const Shape& s = sample.s2_image.shape();
  if (s.size() != 3 || s[1] != s[2]) throw ContractViolation("augment: expected square [bands, H, W] image");
  const std::size_t n = s[1];
  const auto map = source_map(n, params);
  data::Sample out = sample;
  out.s2_image = transform_image(sample.s2_image, map, params, true);
  // S5P carries concentrations, not reflectance: geometry only.
  if (sample.s5p_image) out.s5p_image = transform_image(*sample.s5p_image, map, params, false);
  if (!sample.mask.pixels.empty()) {
    if (sample.mask.height != n || sample.mask.width != n) throw ContractViolation("augment: mask size differs from image");
    for (std::size_t i = 0; i < map.size(); ++i) out.mask.pixels[i] = sample.mask.pixels[map[i]];
  }
  return out;
}

}  // namespace geovit::train
