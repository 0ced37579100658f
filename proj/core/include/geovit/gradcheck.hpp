#pragma once

// Central finite-difference checks of analytic gradients (64-bit only).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "geovit/config.hpp"
#include "geovit/tensor.hpp"

namespace geovit::gradcheck {

struct Options {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for relative error; keeps near-zero gradients from
  /// inflating the ratio through rounding noise alone.
  double floor = 1e-5;
  /// Entries checked per input tensor; 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;  // picks entries when max_entries is set
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

struct InputResult {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct Result {
  std::string label;
  std::vector<InputResult> inputs;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// `f` maps the inputs to a scalar loss; it is re-run inside a fresh tape for
/// the analytic pass and outside any tape for the perturbed evaluations.
using LossFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

Result check(const std::string& label, const LossFn& f, std::vector<Tensor<double>> inputs,
             const std::vector<std::string>& names, const Options& options);

/// One check per differentiable op on seeded random inputs.
std::vector<Result> check_ops(std::uint64_t seed, const Options& options = {});

/// Full-model check on one synthetic sample with the tiny configuration:
/// composite loss for CO2, MSE for NO2, over every parameter.
Result check_model(Variant variant, std::uint64_t seed, const Options& options = {});

struct Report {
  Result model;
  std::vector<Result> op_failures;  // filled by localization when the model check fails
  bool passed() const { return model.passed; }
};

/// check_model, then per-op localization on failure.
Report run(Variant variant, std::uint64_t seed, const Options& options = {});

}  // namespace geovit::gradcheck
