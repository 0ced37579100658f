#include "geovit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

#include "geovit/errors.hpp"
#include "geovit/gvt_io.hpp"
#include "geovit/ops.hpp"

namespace geovit::data {
namespace fs = std::filesystem;
using nlohmann::json;

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

GeneratorConfig GeneratorConfig::for_model(const ModelConfig& model) {
  GeneratorConfig g;
  g.image_size = model.image_size;
  g.s2_bands = model.s2_bands;
  g.s5p_bands = model.s5p_bands;
  return g;
}

double co2_target(std::span<const double> plume, double wind) {
  const double integrated = std::accumulate(plume.begin(), plume.end(), 0.0) / kIntegrationNorm;
  return kPowerScale * integrated * (1.0 + kWindCoupling * wind);
}

double no2_target(double field_mean, double surface_factor) {
  return kFieldWeight * field_mean + kSurfaceWeight * surface_factor;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Smooth background: per-band base level plus three low-frequency waves.
std::vector<float> smooth_background(Rng& rng, std::size_t bands, std::size_t size) {
  std::vector<float> img(bands * size * size);
  const double inv = 1.0 / static_cast<double>(size);
  for (std::size_t b = 0; b < bands; ++b) {
    const double base = rng.uniform(0.15, 0.35);
    double amp[3], fx[3], fy[3], phase[3];
    for (int k = 0; k < 3; ++k) {
      amp[k] = rng.uniform(0.0, 0.04);
      fx[k] = rng.uniform(0.5, 2.0);
      fy[k] = rng.uniform(0.5, 2.0);
      phase[k] = rng.uniform(0.0, kTwoPi);
    }
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        double v = base;
        for (int k = 0; k < 3; ++k) {
          v += amp[k] * std::cos(kTwoPi * (fx[k] * static_cast<double>(x) * inv + fy[k] * static_cast<double>(y) * inv) +
                                 phase[k]);
        }
        img[(b * size + y) * size + x] = static_cast<float>(v);
      }
    }
  }
  return img;
}

void clamp_unit(std::vector<float>& v) {
  for (float& x : v) x = std::clamp(x, 0.0f, 1.0f);
}

/// Bands that carry the plume signature of each fuel class.
constexpr std::size_t kFuelBands[2][3] = {{3, 4, 5}, {7, 8, 9}};

}  // namespace

Sample generate_co2_sample(Rng& rng, const GeneratorConfig& config, GeneratorTrace* trace) {
  const std::size_t n = config.image_size;
  if (config.s2_bands < 10) throw ConfigError("co2 generator needs at least 10 S2 bands");
  Sample s;
  std::vector<float> img = smooth_background(rng, config.s2_bands, n);

  std::vector<float> weather(kWeatherDim);
  for (float& w : weather) w = static_cast<float>(rng.normal());
  const double wind = weather[2];

  s.fuel_class = static_cast<std::size_t>(rng.below(2));
  std::vector<double> plume(n * n, 0.0);
  if (rng.bernoulli(config.plume_probability)) {
    const double size = static_cast<double>(n);
    const double cx = rng.uniform(0.25, 0.75) * size;
    const double cy = rng.uniform(0.25, 0.75) * size;
    double amplitude = rng.uniform(0.4, 0.55);
    if (config.plume_amplitude) amplitude = *config.plume_amplitude;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double sigma_minor = rng.uniform(6.0, 9.0) * size / 64.0;
    const double sigma_major = sigma_minor * (1.0 + 0.5 * std::abs(wind));
    const double c = std::cos(theta), sn = std::sin(theta);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const double u = dx * c + dy * sn;
        const double v = -dx * sn + dy * c;
        plume[y * n + x] = amplitude * std::exp(-0.5 * (u * u / (sigma_major * sigma_major) +
                                                        v * v / (sigma_minor * sigma_minor)));
      }
    }
  }
  s.mask = Mask{n, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t i = 0; i < n * n; ++i) {
    if (plume[i] > kMaskThreshold) s.mask.pixels[i] = 1;
    for (std::size_t b : kFuelBands[s.fuel_class]) img[b * n * n + i] += static_cast<float>(plume[i]);
  }
  clamp_unit(img);

  const double noise = rng.normal(0.0, kTargetNoise);
  s.target = co2_target(plume, wind) + noise;
  s.s2_image = Tensor<float>({config.s2_bands, n, n}, std::move(img));
  s.weather = Tensor<float>({kWeatherDim}, std::move(weather));
  if (trace) *trace = GeneratorTrace{std::move(plume), wind, 0.0, 0.0, noise};
  return s;
}

Sample generate_no2_sample(Rng& rng, const GeneratorConfig& config, GeneratorTrace* trace) {
  const std::size_t n = config.image_size, g = config.coarse_grid;
  if (g == 0 || n % g != 0) throw ConfigError("no2 generator: image size must be a multiple of the coarse grid");
  Sample s;

  // Hidden coarse concentration field.
  double level = rng.uniform(0.1, 0.9);
  if (config.field_level) level = *config.field_level;
  const double wave_amp = rng.uniform(0.0, 0.1);
  const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5), phase = rng.uniform(0.0, kTwoPi);
  std::vector<float> field(g * g);
  const double scale = config.field_level ? *config.field_level : 1.0;
  for (std::size_t y = 0; y < g; ++y) {
    for (std::size_t x = 0; x < g; ++x) {
      const double wave = wave_amp * scale *
                          std::cos(kTwoPi * (fx * static_cast<double>(x) + fy * static_cast<double>(y)) /
                                       static_cast<double>(g) + phase);
      field[y * g + x] = static_cast<float>(std::max(0.0, level + wave));
    }
  }
  const double field_mean = std::accumulate(field.begin(), field.end(), 0.0) / static_cast<double>(g * g);

  std::vector<float> coarse;
  coarse.reserve(config.s5p_bands * g * g);
  for (std::size_t b = 0; b < config.s5p_bands; ++b) coarse.insert(coarse.end(), field.begin(), field.end());
  std::vector<float> s5p = upsample_bilinear_values<float>(coarse, config.s5p_bands, g, g, n / g);
  for (float& v : s5p) v += static_cast<float>(rng.normal(0.0, kS5pNoise));

  double surface = rng.uniform(0.0, 1.0);
  if (config.surface_factor) surface = *config.surface_factor;
  std::vector<float> img = smooth_background(rng, config.s2_bands, n);
  const double texture = kTextureBase + kTextureGain * surface;
  // Pixel-scale checkerboard: local variance texture^2 grows with the surface factor.
  for (std::size_t b = 0; b < config.s2_bands; ++b) {
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double sign = (x + y) % 2 ? 1.0 : -1.0;
        img[(b * n + y) * n + x] += static_cast<float>(sign * texture + rng.normal(0.0, kS2Noise));
      }
    }
  }
  clamp_unit(img);

  const double noise = rng.normal(0.0, kTargetNoise);
  s.target = no2_target(field_mean, surface) + noise;
  s.s2_image = Tensor<float>({config.s2_bands, n, n}, std::move(img));
  s.s5p_image = Tensor<float>({config.s5p_bands, n, n}, std::move(s5p));
  if (trace) *trace = GeneratorTrace{{}, 0.0, field_mean, surface, noise};
  return s;
}

std::vector<Sample> generate_dataset(Variant variant, std::size_t count, std::uint64_t seed,
                                     const GeneratorConfig& config) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    out.push_back(variant == Variant::kCo2 ? generate_co2_sample(rng, config) : generate_no2_sample(rng, config));
  }
  return out;
}

std::size_t train_split_size(std::size_t count) { return count - count / 5; }

NormStats compute_norm_stats(std::span<const Sample> samples) {
  NormStats st;
  if (samples.empty()) return st;
  double m = 0.0;
  for (const auto& s : samples) m += s.target;
  m /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const auto& s : samples) var += (s.target - m) * (s.target - m);
  var /= static_cast<double>(samples.size());
  st.target_mean = m;
  st.target_std = var > 0.0 ? std::sqrt(var) : 1.0;
  return st;
}

Dataset synthesize(Variant variant, std::size_t count, std::uint64_t seed, const GeneratorConfig& config) {
  Dataset d;
  d.variant = variant;
  d.samples = generate_dataset(variant, count, seed, config);
  d.train_count = train_split_size(count);
  d.norm = compute_norm_stats(d.train());
  return d;
}

namespace {

std::string sample_file(std::size_t i, const char* role) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "sample_%05zu_%s.gvt", i, role);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  json samples = json::array();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    if (s.variant() != dataset.variant) throw ContractViolation("save_dataset: sample variant differs from dataset");
    json files;
    files["s2_image"] = sample_file(i, "s2");
    write_tensor(dir / sample_file(i, "s2"), s.s2_image);
    if (s.weather) {
      files["weather"] = sample_file(i, "weather");
      write_tensor(dir / sample_file(i, "weather"), *s.weather);
      files["mask"] = sample_file(i, "mask");
      write_gvt<std::uint8_t>(dir / sample_file(i, "mask"), {s.mask.height, s.mask.width}, s.mask.pixels);
    }
    if (s.s5p_image) {
      files["s5p_image"] = sample_file(i, "s5p");
      write_tensor(dir / sample_file(i, "s5p"), *s.s5p_image);
    }
    samples.push_back({{"files", files}, {"fuel_class", s.fuel_class}, {"target", s.target}});
  }
  json manifest = {
      {"variant", std::string(to_string(dataset.variant))},
      {"count", dataset.samples.size()},
      {"train_count", dataset.train_count},
      {"samples", samples},
      {"norm_stats", {{"target_mean", dataset.norm.target_mean}, {"target_std", dataset.norm.target_std}}},
  };
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw FormatError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& dir, std::optional<Variant> expected) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::is_directory(dir)) throw FormatError("dataset directory not found: " + dir.string());
  std::ifstream is(manifest_path);
  if (!is) throw FormatError("missing dataset manifest: " + manifest_path.string());
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  Dataset d;
  try {
    d.variant = parse_variant(m.at("variant").get<std::string>());
    if (expected && *expected != d.variant) {
      throw ConfigError("dataset " + dir.string() + " holds variant " + std::string(to_string(d.variant)) +
                        ", expected " + std::string(to_string(*expected)));
    }
    const auto count = m.at("count").get<std::size_t>();
    const json& entries = m.at("samples");
    if (!entries.is_array() || entries.size() != count) {
      throw FormatError("dataset integrity: manifest count " + std::to_string(count) + " but " +
                        std::to_string(entries.size()) + " sample entries");
    }
    d.train_count = m.value("train_count", train_split_size(count));
    if (d.train_count > count) throw FormatError("dataset integrity: train_count exceeds count");
    d.norm.target_mean = m.at("norm_stats").at("target_mean").get<double>();
    d.norm.target_std = m.at("norm_stats").at("target_std").get<double>();

    std::set<std::string> referenced;
    for (const json& e : entries) {
      Sample s;
      const json& files = e.at("files");
      auto need = [&](const char* role) {
        if (!files.contains(role)) {
          throw FormatError("dataset integrity: sample lacks '" + std::string(role) + "' for variant " +
                            std::string(to_string(d.variant)));
        }
        const std::string name = files.at(role).get<std::string>();
        if (!fs::exists(dir / name)) throw FormatError("dataset integrity: missing file " + (dir / name).string());
        referenced.insert(name);
        return dir / name;
      };
      s.s2_image = read_tensor<float>(need("s2_image"));
      if (d.variant == Variant::kCo2) {
        s.weather = read_tensor<float>(need("weather"));
        auto mask = read_gvt<std::uint8_t>(need("mask"));
        if (mask.shape.size() != 2) throw FormatError("dataset integrity: mask must be 2-D");
        s.mask = Mask{mask.shape[0], mask.shape[1], std::move(mask.values)};
      } else {
        s.s5p_image = read_tensor<float>(need("s5p_image"));
      }
      s.fuel_class = e.at("fuel_class").get<std::size_t>();
      s.target = e.at("target").get<double>();
      d.samples.push_back(std::move(s));
    }
    std::size_t present = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".gvt") ++present;
    }
    if (present != referenced.size()) {
      throw FormatError("dataset integrity: " + std::to_string(present) + " .gvt files present but manifest references " +
                        std::to_string(referenced.size()));
    }
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  return d;
}

std::vector<Sample> shuffle_s5p(std::span<const Sample> samples, std::uint64_t seed) {
  std::vector<Sample> out(samples.begin(), samples.end());
  const std::size_t n = out.size();
  if (n < 2) return out;
  // Rotation by a random non-zero offset of a random permutation: a derangement.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  const std::size_t shift = 1 + rng.below(n - 1);
  for (std::size_t k = 0; k < n; ++k) out[perm[k]].s5p_image = samples[perm[(k + shift) % n]].s5p_image;
  return out;
}

}  // namespace geovit::data
