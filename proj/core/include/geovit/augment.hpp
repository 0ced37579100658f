#pragma once

#include <cstddef>

#include "geovit/dataset.hpp"
#include "geovit/rng.hpp"

namespace geovit::train {

struct AugmentConfig {
  bool crop = true;
  std::size_t pad = 4;  // reflect padding before the random crop
  bool flip = true;
  double flip_probability = 0.5;
  bool photometric = true;
  double brightness_min = 0.8, brightness_max = 1.2;
  double contrast_min = 0.8, contrast_max = 1.2;
};

/// One concrete draw of the random augmentation. Offsets index the padded
/// image, so (pad, pad) is the identity crop.
struct AugmentParams {
  std::size_t offset_y = 0;
  std::size_t offset_x = 0;
  std::size_t pad = 0;
  bool flip = false;
  double brightness = 1.0;
  double contrast = 1.0;

  static AugmentParams identity(std::size_t pad = 0) { return {pad, pad, pad, false, 1.0, 1.0}; }
};

AugmentParams draw_augmentation(Rng& rng, const AugmentConfig& config);

/// Reflect-pads and crops, then optionally mirrors left-right, every image
/// and the mask with the same spatial map; finally applies
/// pixel <- (pixel - band_mean) * contrast + band_mean * brightness to image
/// bands only. Labels and targets are copied unchanged.
data::Sample apply_augmentation(const data::Sample& sample, const AugmentParams& params);

/// Source pixel of output (y, x) under `params` for an n x n image
/// (reflection excludes the edge pixel, e.g. -1 -> 1, n -> n - 2).
std::size_t augment_source_index(std::size_t y, std::size_t x, std::size_t n, const AugmentParams& params);

inline data::Sample augment(const data::Sample& sample, Rng& rng, const AugmentConfig& config) {
  return apply_augmentation(sample, draw_augmentation(rng, config));
}

}  // namespace geovit::train
