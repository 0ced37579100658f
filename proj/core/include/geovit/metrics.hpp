#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "geovit/config.hpp"
#include "geovit/dataset.hpp"

namespace geovit::metrics {

/// |pred AND true| / |pred OR true| over plume pixels; 1 when both are empty.
double compute_iou(const data::Mask& pred, const data::Mask& truth);

/// Fraction of positions where the class indices agree.
double compute_accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truths);

struct RegressionMetrics {
  double r2 = 0.0;
  double mae = 0.0;
  double mse = 0.0;
};

/// r2 = 1 - SS_res / SS_tot. Requires >= 2 values and non-constant truths.
RegressionMetrics compute_regression_metrics(std::span<const double> preds, std::span<const double> truths);

struct LossBreakdown {
  double total = 0.0;
  double seg = 0.0;
  double cls = 0.0;
  double reg = 0.0;
};

struct MetricsReport {
  Variant variant = Variant::kCo2;
  std::size_t n_samples = 0;
  std::optional<double> seg_iou;       // CO2 only: mean per-sample IoU
  std::optional<double> cls_accuracy;  // CO2 only
  double r2 = 0.0;
  double mae = 0.0;
  double mse = 0.0;
  LossBreakdown loss;
};

}  // namespace geovit::metrics
