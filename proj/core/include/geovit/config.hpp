#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace geovit {

enum class Variant { kCo2, kNo2 };

std::string_view to_string(Variant v);
/// Accepts "co2" / "no2" (case-insensitive); throws ConfigError otherwise.
Variant parse_variant(std::string_view name);

/// Number of weather components: temperature, relative humidity, wind speed.
inline constexpr std::size_t kWeatherDim = 3;

/// Architecture hyperparameters shared by both variants.
struct ModelConfig {
  Variant variant = Variant::kCo2;
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 128;
  std::size_t num_heads = 4;
  std::size_t depth = 6;
  std::size_t ffn_ratio = 4;
  /// 1-based block indices whose outputs feed the segmentation decoder.
  std::vector<std::size_t> tap_depths = {2, 4, 6};
  std::size_t s2_bands = 12;
  std::size_t s5p_bands = 1;
  std::size_t num_fuel_classes = 2;
  std::size_t num_seg_classes = 2;
  std::size_t decoder_dim = 64;
  /// Hidden width of the dense heads; 0 means embed_dim.
  std::size_t head_hidden = 0;
  double layer_norm_eps = 1e-5;

  std::size_t grid_size() const { return image_size / patch_size; }
  std::size_t num_tokens() const { return grid_size() * grid_size(); }
  std::size_t head_hidden_width() const { return head_hidden ? head_hidden : embed_dim; }

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  /// The small configuration used by gradient checking
  /// (16 px images, 4 px patches, width 32, two blocks, two heads).
  static ModelConfig tiny(Variant variant);

  bool operator==(const ModelConfig&) const = default;
};

/// Evenly spaced taps {L/3, 2L/3, L}, deduplicated and clamped to >= 1.
std::vector<std::size_t> default_tap_depths(std::size_t depth);

}  // namespace geovit
