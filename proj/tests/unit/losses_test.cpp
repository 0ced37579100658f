#include <gtest/gtest.h>

#include <cmath>

#include "geovit/errors.hpp"
#include "geovit/losses.hpp"
#include "test_util.hpp"

namespace geovit::train {
namespace {

using test::random_tensor;

TEST(LabelSmoothing, TwoClassTarget) {
  auto q = smoothed_target(2, 1, 0.1);
  EXPECT_DOUBLE_EQ(q[0], 0.05);
  EXPECT_DOUBLE_EQ(q[1], 0.95);
  EXPECT_EQ(smoothed_target(2, 0, 0.0), (std::vector<double>{1.0, 0.0}));
  auto u = smoothed_target(4, 2, 1.0);
  for (double v : u) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(LabelSmoothing, BadArgumentsAreContractViolations) {
  EXPECT_THROW(smoothed_target(1, 0, 0.1), ContractViolation);
  EXPECT_THROW(smoothed_target(3, 3, 0.1), ContractViolation);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  auto logits = Tensor<double>::zeros({3, 2});
  std::vector<std::size_t> y{0, 1, 1};
  EXPECT_NEAR(smoothed_cross_entropy(logits, std::span<const std::size_t>(y), 0.1).item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, MatchesHandFormula) {
  auto logits = Tensor<double>({1, 2}, {2.0, -1.0});
  std::vector<std::size_t> y{1};
  const double lse = std::log(std::exp(2.0) + std::exp(-1.0));
  const double expected = -(0.05 * (2.0 - lse) + 0.95 * (-1.0 - lse));
  EXPECT_NEAR(smoothed_cross_entropy(logits, std::span<const std::size_t>(y), 0.1).item(), expected, 1e-14);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusTarget) {
  Rng rng(1);
  auto logits = random_tensor<double>(rng, {4, 3}, 2.0, true);
  std::vector<std::size_t> y{0, 2, 1, 1};
  Tape<double> tape;
  tape.backward(smoothed_cross_entropy(logits, std::span<const std::size_t>(y), 0.2));
  for (std::size_t r = 0; r < 4; ++r) {
    double z = 0;
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(logits.data()[r * 3 + k]);
    const auto q = smoothed_target(3, y[r], 0.2);
    for (std::size_t k = 0; k < 3; ++k) {
      const double p = std::exp(logits.data()[r * 3 + k]) / z;
      EXPECT_NEAR(logits.grad()[r * 3 + k], (p - q[k]) / 4.0, 1e-14);
    }
  }
}

TEST(CrossEntropy, LabelCountMismatch) {
  std::vector<std::size_t> y{0};
  EXPECT_THROW(smoothed_cross_entropy(Tensor<float>::zeros({2, 2}), std::span<const std::size_t>(y), 0.1f),
               ContractViolation);
}

TEST(SegmentationLoss, PerPixelCrossEntropy) {
  // one 1x2 image, pixel 0 background, pixel 1 plume
  auto logits = Tensor<double>({1, 2, 1, 2}, {1.0, 0.0, -1.0, 3.0});
  std::vector<std::uint8_t> mask{0, 1};
  const double l0 = -(0.95 * std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0))) +
                      0.05 * std::log(std::exp(-1.0) / (std::exp(1.0) + std::exp(-1.0))));
  const double l1 = -(0.05 * std::log(1.0 / (1.0 + std::exp(3.0))) +
                      0.95 * std::log(std::exp(3.0) / (1.0 + std::exp(3.0))));
  EXPECT_NEAR(segmentation_loss(logits, std::span<const std::uint8_t>(mask), 0.1).item(), 0.5 * (l0 + l1), 1e-14);
  std::vector<std::uint8_t> wrong{0};
  EXPECT_THROW(segmentation_loss(logits, std::span<const std::uint8_t>(wrong), 0.1), ContractViolation);
}

TEST(MseLoss, MeanSquaredError) {
  auto preds = Tensor<double>({3}, {1, 2, 3});
  std::vector<double> t{1, 4, 0};
  EXPECT_DOUBLE_EQ(mse_loss(preds, std::span<const double>(t)).item(), 13.0 / 3.0);
}

TEST(CompositeLoss, WeightedSumOfParts) {
  Co2Outputs<double> out{Tensor<double>::zeros({1, 2, 2, 2}), Tensor<double>({1, 2}, {0.5, -0.5}),
                         Tensor<double>({1}, {2.0})};
  Co2Labels labels{{0, 1, 1, 0}, {1}, {0.5}};
  auto loss = composite_loss(out, labels, LossWeights{2.0, 0.5, 3.0}, 0.1);
  const auto b = loss.breakdown();
  EXPECT_NEAR(b.seg, std::log(2.0), 1e-14);
  EXPECT_NEAR(b.reg, 2.25, 1e-14);
  EXPECT_NEAR(b.total, 2.0 * b.seg + 0.5 * b.cls + 3.0 * b.reg, 1e-12);
}

}  // namespace
}  // namespace geovit::train
