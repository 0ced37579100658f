#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "geovit/adamw.hpp"
#include "geovit/augment.hpp"
#include "geovit/backbone.hpp"
#include "geovit/dataset.hpp"
#include "geovit/losses.hpp"
#include "geovit/metrics.hpp"

namespace geovit::train {

struct TrainConfig {
  AdamWConfig optimizer;
  double label_smoothing = 0.1;
  LossWeights weights;
  std::size_t batch_size = 8;
  std::int64_t steps = 0;  // total optimizer steps, counted from a fresh model
  std::uint64_t seed = 0;
  std::int64_t eval_every = 50;
  std::int64_t log_every = 10;
  bool augment = true;
  AugmentConfig augmentation;

  void validate() const;
};

struct HistoryRecord {
  std::int64_t step = 0;
  metrics::LossBreakdown train_loss;
  std::optional<metrics::MetricsReport> eval;
  std::optional<double> top_r2;  // best eval R^2 seen so far in the run
};

struct TrainHooks {
  std::function<void(const HistoryRecord&)> on_record;
  /// Called after every evaluation; `improved` is true when R^2 reached a new best.
  std::function<void(std::int64_t step, const metrics::MetricsReport&, bool improved)> on_eval;
  /// Running best carried over when resuming.
  std::optional<double> top_r2;
};

/// Indices into the training split for the batch of `step` (1-based). Batches
/// walk consecutive epoch permutations, each seeded by (seed, epoch), so any
/// step's batch is computable without replaying earlier ones.
std::vector<std::size_t> batch_indices(std::size_t train_size, std::size_t batch_size, std::uint64_t seed,
                                       std::int64_t step);

template <typename T>
struct EvalResult {
  metrics::MetricsReport report;
  std::vector<double> predictions;  // original units
  std::vector<std::size_t> fuel_predictions;
  std::vector<data::Mask> masks;
};

/// Never augments. Regression metrics are reported in original units;
/// r2 is NaN when fewer than two samples or constant targets are given.
template <typename T>
EvalResult<T> evaluate(const Co2Model<T>& model, std::span<const data::Sample> samples, const data::NormStats& norm,
                       const TrainConfig& config);
template <typename T>
EvalResult<T> evaluate(const No2Model<T>& model, std::span<const data::Sample> samples, const data::NormStats& norm,
                       const TrainConfig& config);

/// Runs optimizer steps store.step_count()+1 .. config.steps over the
/// dataset's training split, evaluating on its eval split every
/// `eval_every` steps. Throws NumericalError naming the step on a
/// non-finite loss.
template <typename T>
std::vector<HistoryRecord> train_loop(Co2Model<T>& model, const data::Dataset& dataset, const TrainConfig& config,
                                      const TrainHooks& hooks = {});
template <typename T>
std::vector<HistoryRecord> train_loop(No2Model<T>& model, const data::Dataset& dataset, const TrainConfig& config,
                                      const TrainHooks& hooks = {});

/// Stacks sample images into a [B, bands, H, W] batch tensor.
template <typename T>
Tensor<T> stack_s2(std::span<const data::Sample* const> batch);
template <typename T>
Tensor<T> stack_s5p(std::span<const data::Sample* const> batch);
template <typename T>
Tensor<T> stack_weather(std::span<const data::Sample* const> batch);

}  // namespace geovit::train
