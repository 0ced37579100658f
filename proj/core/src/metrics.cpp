#include "geovit/metrics.hpp"

#include <cmath>
#include <string>

#include "geovit/errors.hpp"

namespace geovit::metrics {

double compute_iou(const data::Mask& pred, const data::Mask& truth) {
  if (pred.height != truth.height || pred.width != truth.width || pred.pixels.size() != truth.pixels.size()) {
    throw ContractViolation("compute_iou: mask shapes differ (" + std::to_string(pred.height) + "x" +
                            std::to_string(pred.width) + " vs " + std::to_string(truth.height) + "x" +
                            std::to_string(truth.width) + ")");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const bool p = pred.pixels[i] == 1, t = truth.pixels[i] == 1;
    inter += p && t;
    uni += p || t;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double compute_accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truths) {
  if (preds.size() != truths.size() || preds.empty()) {
    throw ContractViolation("compute_accuracy: need equal non-empty inputs, got " + std::to_string(preds.size()) +
                            " and " + std::to_string(truths.size()));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

RegressionMetrics compute_regression_metrics(std::span<const double> preds, std::span<const double> truths) {
  if (preds.size() != truths.size() || preds.size() < 2) {
    throw ContractViolation("regression metrics: need >= 2 paired values, got " + std::to_string(preds.size()) +
                            " and " + std::to_string(truths.size()));
  }
  const double n = static_cast<double>(truths.size());
  double mean = 0.0;
  for (double y : truths) mean += y;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0, abs_err = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double r = truths[i] - preds[i];
    ss_res += r * r;
    abs_err += std::abs(r);
    ss_tot += (truths[i] - mean) * (truths[i] - mean);
  }
  if (ss_tot == 0.0) throw ContractViolation("R^2 undefined: all true values are identical");
  return {1.0 - ss_res / ss_tot, abs_err / n, ss_res / n};
}

}  // namespace geovit::metrics
