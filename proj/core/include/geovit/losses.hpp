#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "geovit/backbone.hpp"
#include "geovit/metrics.hpp"

namespace geovit::train {

/// q_k = (1 - eps) [k == true_class] + eps / K.
std::vector<double> smoothed_target(std::size_t num_classes, std::size_t true_class, double eps);

/// Mean over rows of -sum_k q_k log softmax(logits)_k, for logits [.., K]
/// and one class index per row.
template <typename T>
Tensor<T> smoothed_cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> classes, T eps);

/// Per-pixel smoothed cross-entropy averaged over all pixels. logits
/// [B, C, H, W] (or [C, H, W]); `mask` holds B*H*W class indices.
template <typename T>
Tensor<T> segmentation_loss(const Tensor<T>& logits, std::span<const std::uint8_t> mask, T eps);

/// Mean squared error against constant targets.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& preds, std::span<const T> targets);

struct LossWeights {
  double seg = 1.0;
  double cls = 1.0;
  double reg = 1.0;
};

struct Co2Labels {
  std::vector<std::uint8_t> masks;  // B*H*W
  std::vector<std::size_t> fuel_classes;
  std::vector<double> targets;  // standardized
};

template <typename T>
struct CompositeLoss {
  Tensor<T> total;
  Tensor<T> seg, cls, reg;

  metrics::LossBreakdown breakdown() const;
};

/// w_seg * L_seg + w_cls * L_cls + w_reg * L_mse.
template <typename T>
CompositeLoss<T> composite_loss(const Co2Outputs<T>& outputs, const Co2Labels& labels, const LossWeights& weights,
                                T label_smoothing);

}  // namespace geovit::train
