#pragma once

// Seeded synthetic scenes standing in for Sentinel-2 / Sentinel-5P data, and
// their on-disk layout (manifest.json + one .gvt file per tensor).
//
// All generator constants below are frozen; tests depend on them.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "geovit/config.hpp"
#include "geovit/rng.hpp"
#include "geovit/tensor.hpp"

namespace geovit::data {

/// Binary segmentation mask, row-major, values {0 background, 1 plume}.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const Mask&) const = default;
};

struct Sample {
  Tensor<float> s2_image;                  // [s2_bands, H, W], values in [0, 1]
  std::optional<Tensor<float>> weather;    // CO2: standardized (temperature, humidity, wind)
  std::optional<Tensor<float>> s5p_image;  // NO2: [s5p_bands, H, W]
  Mask mask;                               // CO2 plume mask; empty (0 x 0) for NO2
  std::size_t fuel_class = 0;
  double target = 0.0;  // power rate (CO2) or concentration (NO2), original units

  Variant variant() const { return weather ? Variant::kCo2 : Variant::kNo2; }
};

struct GeneratorConfig {
  std::size_t image_size = 64;
  std::size_t s2_bands = 12;
  std::size_t s5p_bands = 1;
  std::size_t coarse_grid = 8;  // native S5P resolution before upsampling
  double plume_probability = 1.0;
  std::optional<double> plume_amplitude;  // overrides the sampled amplitude
  std::optional<double> field_level;      // NO2: overrides the hidden field level
  std::optional<double> surface_factor;   // NO2: overrides the surface factor

  static GeneratorConfig for_model(const ModelConfig& model);
};

inline constexpr double kMaskThreshold = 0.15;
inline constexpr double kPowerScale = 10.0;
inline constexpr double kWindCoupling = 0.3;
inline constexpr double kIntegrationNorm = 256.0;  // plume sum divisor
inline constexpr double kFieldWeight = 5.0;
inline constexpr double kSurfaceWeight = 3.0;
inline constexpr double kTargetNoise = 0.05;
inline constexpr double kS5pNoise = 0.02;
inline constexpr double kS2Noise = 0.01;  // NO2 S2 sensor noise
inline constexpr double kTextureBase = 0.02;  // checkerboard amplitude at surface factor 0
inline constexpr double kTextureGain = 0.08;

/// Latent quantities behind one generated sample.
struct GeneratorTrace {
  std::vector<double> plume;  // CO2 plume intensity per pixel (H*W)
  double wind = 0.0;
  double field_mean = 0.0;    // NO2 hidden-field mean
  double surface_factor = 0.0;
  double noise = 0.0;         // additive target noise
};

/// Noise-free CO2 target: 10 * (sum(plume) / 256) * (1 + 0.3 * wind).
double co2_target(std::span<const double> plume, double wind);
/// Noise-free NO2 target: 5 * mean(field) + 3 * surface factor.
double no2_target(double field_mean, double surface_factor);

Sample generate_co2_sample(Rng& rng, const GeneratorConfig& config, GeneratorTrace* trace = nullptr);
Sample generate_no2_sample(Rng& rng, const GeneratorConfig& config, GeneratorTrace* trace = nullptr);

/// Sample i is drawn from Rng(derive_seed(seed, i)).
std::vector<Sample> generate_dataset(Variant variant, std::size_t count, std::uint64_t seed,
                                     const GeneratorConfig& config);

/// First count - count/5 samples train, the rest evaluate.
std::size_t train_split_size(std::size_t count);

struct NormStats {
  double target_mean = 0.0;
  double target_std = 1.0;

  double standardize(double y) const { return (y - target_mean) / target_std; }
  double restore(double z) const { return z * target_std + target_mean; }
  bool operator==(const NormStats&) const = default;
};

/// Population mean/std of the targets; std falls back to 1 when degenerate.
NormStats compute_norm_stats(std::span<const Sample> samples);

struct Dataset {
  Variant variant = Variant::kCo2;
  std::vector<Sample> samples;
  std::size_t train_count = 0;
  NormStats norm;

  std::span<const Sample> train() const { return std::span(samples).first(train_count); }
  std::span<const Sample> eval() const { return std::span(samples).subspan(train_count); }
};

/// Generates `count` samples, the 80/20 split and train-split statistics.
Dataset synthesize(Variant variant, std::size_t count, std::uint64_t seed, const GeneratorConfig& config);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Throws ConfigError on variant mismatch (when `expected` is given) and
/// FormatError on missing/extra files or count disagreement.
Dataset load_dataset(const std::filesystem::path& dir, std::optional<Variant> expected = std::nullopt);

/// Pairs every sample with another sample's S5P image (a derangement when
/// more than one sample is present); used to test that S5P carries signal.
std::vector<Sample> shuffle_s5p(std::span<const Sample> samples, std::uint64_t seed);

}  // namespace geovit::data
