#include "geovit/losses.hpp"

#include <string>

#include "geovit/errors.hpp"

namespace geovit::train {

std::vector<double> smoothed_target(std::size_t num_classes, std::size_t true_class, double eps) {
  if (num_classes < 2) throw ContractViolation("label smoothing needs at least 2 classes");
  if (true_class >= num_classes) {
    throw ContractViolation("class index " + std::to_string(true_class) + " out of range for " +
                            std::to_string(num_classes) + " classes");
  }
  std::vector<double> q(num_classes, eps / static_cast<double>(num_classes));
  q[true_class] += 1.0 - eps;
  return q;
}

template <typename T>
Tensor<T> smoothed_cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> classes, T eps) {
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.numel() / k;
  if (classes.size() != rows) {
    throw ContractViolation("cross-entropy: " + std::to_string(classes.size()) + " labels for " +
                            std::to_string(rows) + " rows");
  }
  std::vector<T> q(logits.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = smoothed_target(k, classes[r], static_cast<double>(eps));
    for (std::size_t j = 0; j < k; ++j) q[r * k + j] = static_cast<T>(row[j]);
  }
  Tensor<T> target(logits.shape(), std::move(q));
  Tensor<T> logp = log_softmax(logits, logits.rank() - 1);
  return scale(sum(mul(logp, target)), T(-1) / static_cast<T>(rows));
}

template <typename T>
Tensor<T> segmentation_loss(const Tensor<T>& logits, std::span<const std::uint8_t> mask, T eps) {
  if (logits.rank() < 3) throw DimensionError("segmentation loss: logits must be [.., C, H, W]");
  const std::size_t r = logits.rank();
  const std::size_t c = logits.shape()[r - 3], hw = logits.shape()[r - 2] * logits.shape()[r - 1];
  const std::size_t batch = logits.numel() / (c * hw);
  if (mask.size() != batch * hw) {
    throw ContractViolation("segmentation loss: mask has " + std::to_string(mask.size()) + " pixels, logits " +
                            shape_to_string(logits.shape()));
  }
  std::vector<T> q(logits.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const auto dist = smoothed_target(c, mask[b * hw + p], static_cast<double>(eps));
      for (std::size_t k = 0; k < c; ++k) q[(b * c + k) * hw + p] = static_cast<T>(dist[k]);
    }
  }
  Tensor<T> target(logits.shape(), std::move(q));
  Tensor<T> logp = log_softmax(logits, r - 3);
  return scale(sum(mul(logp, target)), T(-1) / static_cast<T>(batch * hw));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& preds, std::span<const T> targets) {
  if (preds.numel() != targets.size()) {
    throw ContractViolation("mse: " + std::to_string(targets.size()) + " targets for predictions " +
                            shape_to_string(preds.shape()));
  }
  Tensor<T> diff = sub(preds, Tensor<T>(preds.shape(), std::vector<T>(targets.begin(), targets.end())));
  return mean(mul(diff, diff));
}

template <typename T>
metrics::LossBreakdown CompositeLoss<T>::breakdown() const {
  return {static_cast<double>(total.item()), static_cast<double>(seg.item()), static_cast<double>(cls.item()),
          static_cast<double>(reg.item())};
}

template <typename T>
CompositeLoss<T> composite_loss(const Co2Outputs<T>& outputs, const Co2Labels& labels, const LossWeights& weights,
                                T label_smoothing) {
  CompositeLoss<T> out;
  out.seg = segmentation_loss(outputs.seg_logits, labels.masks, label_smoothing);
  out.cls = smoothed_cross_entropy(outputs.fuel_logits, labels.fuel_classes, label_smoothing);
  std::vector<T> targets(labels.targets.begin(), labels.targets.end());
  out.reg = mse_loss(outputs.power, std::span<const T>(targets));
  out.total = add(add(scale(out.seg, static_cast<T>(weights.seg)), scale(out.cls, static_cast<T>(weights.cls))),
                  scale(out.reg, static_cast<T>(weights.reg)));
  return out;
}

#define GEOVIT_INSTANTIATE_LOSSES(T)                                                                        \
  template Tensor<T> smoothed_cross_entropy(const Tensor<T>&, std::span<const std::size_t>, T);             \
  template Tensor<T> segmentation_loss(const Tensor<T>&, std::span<const std::uint8_t>, T);                 \
  template Tensor<T> mse_loss(const Tensor<T>&, std::span<const T>);                                        \
  template struct CompositeLoss<T>;                                                                         \
  template CompositeLoss<T> composite_loss(const Co2Outputs<T>&, const Co2Labels&, const LossWeights&, T);

GEOVIT_INSTANTIATE_LOSSES(float)
GEOVIT_INSTANTIATE_LOSSES(double)

#undef GEOVIT_INSTANTIATE_LOSSES

}  // namespace geovit::train
