#include "geovit/config.hpp"

#include <algorithm>
#include <cctype>

#include "geovit/errors.hpp"

namespace geovit {

std::string_view to_string(Variant v) { return v == Variant::kCo2 ? "co2" : "no2"; }

Variant parse_variant(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "co2") return Variant::kCo2;
  if (lower == "no2") return Variant::kNo2;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected co2 or no2)");
}

std::vector<std::size_t> default_tap_depths(std::size_t depth) {
  std::vector<std::size_t> taps;
  for (std::size_t k = 1; k <= 3; ++k) {
    const std::size_t t = std::max<std::size_t>(1, depth * k / 3);
    if (taps.empty() || taps.back() != t) taps.push_back(t);
  }
  return taps;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (depth == 0) fail("depth must be at least 1");
  if (patch_size == 0 || image_size == 0) fail("image_size and patch_size must be positive");
  if (image_size % patch_size != 0) {
    fail("image_size " + std::to_string(image_size) + " not divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (ffn_ratio == 0) fail("ffn_ratio must be positive");
  if (tap_depths.empty()) fail("tap_depths must not be empty");
  for (std::size_t t : tap_depths) {
    if (t < 1 || t > depth) fail("tap depth " + std::to_string(t) + " outside 1.." + std::to_string(depth));
  }
  if (std::find(tap_depths.begin(), tap_depths.end(), depth) == tap_depths.end()) {
    fail("tap_depths must include the final block " + std::to_string(depth));
  }
  for (std::size_t i = 1; i < tap_depths.size(); ++i) {
    if (tap_depths[i] <= tap_depths[i - 1]) fail("tap_depths must be strictly increasing");
  }
  if (s2_bands == 0 || s5p_bands == 0) fail("band counts must be positive");
  if (num_fuel_classes < 2 || num_seg_classes < 2) fail("class counts must be at least 2");
  if (decoder_dim == 0) fail("decoder_dim must be positive");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
}

ModelConfig ModelConfig::tiny(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 32;
  c.num_heads = 2;
  c.depth = 2;
  c.tap_depths = {1, 2};
  c.decoder_dim = 16;
  return c;
}

}  // namespace geovit
