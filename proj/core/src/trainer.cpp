#include "geovit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <type_traits>

#include "geovit/errors.hpp"
#include "geovit/rng.hpp"

namespace geovit::train {

void TrainConfig::validate() const {
  optimizer.validate();
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
  if (weights.seg < 0.0 || weights.cls < 0.0 || weights.reg < 0.0) throw ConfigError("loss weights must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (eval_every <= 0 || log_every <= 0) throw ConfigError("eval_every and log_every must be positive");
}

std::vector<std::size_t> batch_indices(std::size_t train_size, std::size_t batch_size, std::uint64_t seed,
                                       std::int64_t step) {
  if (train_size == 0) throw ContractViolation("training split is empty");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> perm(train_size);
  const std::uint64_t first = static_cast<std::uint64_t>(step - 1) * batch_size;
  for (std::uint64_t pos = first; pos < first + batch_size; ++pos) {
    const std::uint64_t epoch = pos / train_size;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(derive_seed(seed ^ 0x5EEDBA7C4ULL, epoch));
      for (std::size_t i = train_size - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % train_size]);
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> stack(std::span<const data::Sample* const> batch, const Tensor<float>& (*get)(const data::Sample&)) {
  if (batch.empty()) throw ContractViolation("empty batch");
  const Shape& s = get(*batch.front()).shape();
  Shape shape{batch.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  std::vector<T> values;
  values.reserve(shape_numel(shape));
  for (const data::Sample* sample : batch) {
    const Tensor<float>& t = get(*sample);
    if (t.shape() != s) throw DimensionError("batch members have different shapes");
    for (float v : t.data()) values.push_back(static_cast<T>(v));
  }
  return Tensor<T>(std::move(shape), std::move(values));
}

const Tensor<float>& get_s2(const data::Sample& s) { return s.s2_image; }
const Tensor<float>& get_s5p(const data::Sample& s) {
  if (!s.s5p_image) throw ConfigError("sample has no S5P image (variant mismatch)");
  return *s.s5p_image;
}
const Tensor<float>& get_weather(const data::Sample& s) {
  if (!s.weather) throw ConfigError("sample has no weather vector (variant mismatch)");
  return *s.weather;
}

Co2Labels co2_labels(std::span<const data::Sample* const> batch, const data::NormStats& norm) {
  Co2Labels labels;
  for (const data::Sample* s : batch) {
    labels.masks.insert(labels.masks.end(), s->mask.pixels.begin(), s->mask.pixels.end());
    labels.fuel_classes.push_back(s->fuel_class);
    labels.targets.push_back(norm.standardize(s->target));
  }
  return labels;
}

template <typename T>
std::vector<T> standardized_targets(std::span<const data::Sample* const> batch, const data::NormStats& norm) {
  std::vector<T> out;
  for (const data::Sample* s : batch) out.push_back(static_cast<T>(norm.standardize(s->target)));
  return out;
}

template <typename T>
bool is_co2(const Co2Model<T>*) {
  return true;
}
template <typename T>
bool is_co2(const No2Model<T>*) {
  return false;
}

/// Forward pass and loss for one batch under the active tape (if any).
template <typename T>
std::pair<Tensor<T>, metrics::LossBreakdown> batch_loss(const Co2Model<T>& model,
                                                        std::span<const data::Sample* const> batch,
                                                        const data::NormStats& norm, const TrainConfig& config,
                                                        Co2Outputs<T>* outputs_out = nullptr) {
  Co2Outputs<T> out = model.forward(stack_s2<T>(batch), stack_weather<T>(batch));
  CompositeLoss<T> loss =
      composite_loss(out, co2_labels(batch, norm), config.weights, static_cast<T>(config.label_smoothing));
  if (outputs_out) *outputs_out = out;
  return {loss.total, loss.breakdown()};
}

template <typename T>
std::pair<Tensor<T>, metrics::LossBreakdown> batch_loss(const No2Model<T>& model,
                                                        std::span<const data::Sample* const> batch,
                                                        const data::NormStats& norm, const TrainConfig& /*config*/,
                                                        Tensor<T>* preds_out = nullptr) {
  Tensor<T> preds = model.forward(stack_s2<T>(batch), stack_s5p<T>(batch));
  const auto targets = standardized_targets<T>(batch, norm);
  Tensor<T> loss = mse_loss(preds, std::span<const T>(targets));
  if (preds_out) *preds_out = preds;
  const double v = static_cast<double>(loss.item());
  return {loss, metrics::LossBreakdown{v, 0.0, 0.0, v}};
}

void accumulate(metrics::LossBreakdown& acc, const metrics::LossBreakdown& l, double w) {
  acc.total += w * l.total;
  acc.seg += w * l.seg;
  acc.cls += w * l.cls;
  acc.reg += w * l.reg;
}

template <typename T>
void finish_regression(EvalResult<T>& r, std::span<const data::Sample> samples) {
  std::vector<double> truths;
  for (const auto& s : samples) truths.push_back(s.target);
  double mae = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double e = truths[i] - r.predictions[i];
    mae += std::abs(e);
    mse += e * e;
  }
  const double n = static_cast<double>(truths.size());
  r.report.mae = mae / n;
  r.report.mse = mse / n;
  r.report.r2 = std::numeric_limits<double>::quiet_NaN();
  const bool constant = std::all_of(truths.begin(), truths.end(), [&](double y) { return y == truths.front(); });
  if (truths.size() >= 2 && !constant) {
    const auto m = metrics::compute_regression_metrics(r.predictions, truths);
    r.report.r2 = m.r2;
    r.report.mae = m.mae;
    r.report.mse = m.mse;
  }
}

template <typename Model>
auto evaluate_impl(const Model& model, std::span<const data::Sample> samples, const data::NormStats& norm,
                   const TrainConfig& config) {
  using T = std::remove_cvref_t<decltype(model.params().entries().front().value.data()[0])>;
  EvalResult<T> r;
  r.report.variant = model.config().variant;
  r.report.n_samples = samples.size();
  if (samples.empty()) throw ContractViolation("evaluate: no samples");
  const bool co2 = is_co2(&model);
  std::vector<double> ious;
  for (std::size_t start = 0; start < samples.size(); start += config.batch_size) {
    const std::size_t end = std::min(samples.size(), start + config.batch_size);
    std::vector<const data::Sample*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&samples[i]);
    if constexpr (std::is_same_v<Model, Co2Model<T>>) {
      Co2Outputs<T> out;
      auto [loss, parts] = batch_loss(model, batch, norm, config, &out);
      accumulate(r.report.loss, parts, static_cast<double>(batch.size()));
      const std::size_t classes = out.seg_logits.dim(1), h = out.seg_logits.dim(2), w = out.seg_logits.dim(3);
      const auto seg = out.seg_logits.data();
      const auto fuel = out.fuel_logits.data();
      const std::size_t k = out.fuel_logits.dim(1);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        data::Mask mask{h, w, std::vector<std::uint8_t>(h * w, 0)};
        for (std::size_t p = 0; p < h * w; ++p) {
          std::size_t best = 0;
          for (std::size_t c = 1; c < classes; ++c) {
            if (seg[(b * classes + c) * h * w + p] > seg[(b * classes + best) * h * w + p]) best = c;
          }
          mask.pixels[p] = best == 1 ? 1 : 0;
        }
        ious.push_back(metrics::compute_iou(mask, batch[b]->mask));
        r.masks.push_back(std::move(mask));
        r.fuel_predictions.push_back(static_cast<std::size_t>(
            std::max_element(fuel.begin() + static_cast<std::ptrdiff_t>(b * k),
                             fuel.begin() + static_cast<std::ptrdiff_t>((b + 1) * k)) -
            (fuel.begin() + static_cast<std::ptrdiff_t>(b * k))));
        r.predictions.push_back(norm.restore(static_cast<double>(out.power.data()[b])));
      }
    } else {
      Tensor<T> preds;
      auto [loss, parts] = batch_loss(model, batch, norm, config, &preds);
      accumulate(r.report.loss, parts, static_cast<double>(batch.size()));
      for (std::size_t b = 0; b < batch.size(); ++b) {
        r.predictions.push_back(norm.restore(static_cast<double>(preds.data()[b])));
      }
    }
  }
  const double n = static_cast<double>(samples.size());
  r.report.loss.total /= n;
  r.report.loss.seg /= n;
  r.report.loss.cls /= n;
  r.report.loss.reg /= n;
  if (co2) {
    r.report.seg_iou = std::accumulate(ious.begin(), ious.end(), 0.0) / n;
    std::vector<std::size_t> truths;
    for (const auto& s : samples) truths.push_back(s.fuel_class);
    r.report.cls_accuracy = metrics::compute_accuracy(r.fuel_predictions, truths);
  }
  finish_regression(r, samples);
  return r;
}

template <typename Model>
std::vector<HistoryRecord> train_impl(Model& model, const data::Dataset& dataset, const TrainConfig& config,
                                      const TrainHooks& hooks) {
  using T = std::remove_cvref_t<decltype(model.params().entries().front().value.data()[0])>;
  config.validate();
  if (dataset.variant != model.config().variant) {
    throw ConfigError("dataset variant " + std::string(to_string(dataset.variant)) + " does not match model variant " +
                      std::string(to_string(model.config().variant)));
  }
  std::vector<HistoryRecord> history;
  ParamStore<T>& store = model.params();
  if (store.step_count() >= config.steps) return history;
  const auto train = dataset.train();
  const auto eval = dataset.eval();
  std::optional<double> top_r2 = hooks.top_r2;

  for (std::int64_t step = store.step_count() + 1; step <= config.steps; ++step) {
    const auto indices = batch_indices(train.size(), config.batch_size, config.seed, step);
    std::vector<data::Sample> augmented;
    augmented.reserve(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
      if (config.augment) {
        Rng rng(derive_seed(derive_seed(config.seed ^ 0xA06E47ULL, static_cast<std::uint64_t>(step)), j));
        augmented.push_back(augment(train[indices[j]], rng, config.augmentation));
      } else {
        augmented.push_back(train[indices[j]]);
      }
    }
    std::vector<const data::Sample*> batch;
    for (const auto& s : augmented) batch.push_back(&s);

    store.zero_grad();
    metrics::LossBreakdown parts;
    {
      Tape<T> tape;
      auto [loss, breakdown] = batch_loss(model, batch, dataset.norm, config);
      parts = breakdown;
      if (!std::isfinite(parts.total)) {
        throw NumericalError("non-finite training loss at step " + std::to_string(step));
      }
      backward(loss);
    }
    adamw_step(store, config.optimizer);

    HistoryRecord rec;
    rec.step = step;
    rec.train_loss = parts;
    bool log = step % config.log_every == 0;
    if (step % config.eval_every == 0 && !eval.empty()) {
      auto result = evaluate(model, eval, dataset.norm, config);
      bool improved = false;
      if (!std::isnan(result.report.r2) && (!top_r2 || result.report.r2 > *top_r2)) {
        top_r2 = result.report.r2;
        improved = true;
      }
      rec.eval = result.report;
      if (hooks.on_eval) hooks.on_eval(step, result.report, improved);
      log = true;
    }
    rec.top_r2 = top_r2;
    if (log) {
      if (hooks.on_record) hooks.on_record(rec);
      history.push_back(std::move(rec));
    }
  }
  return history;
}

}  // namespace

template <typename T>
Tensor<T> stack_s2(std::span<const data::Sample* const> batch) {
  return stack<T>(batch, &get_s2);
}
template <typename T>
Tensor<T> stack_s5p(std::span<const data::Sample* const> batch) {
  return stack<T>(batch, &get_s5p);
}
template <typename T>
Tensor<T> stack_weather(std::span<const data::Sample* const> batch) {
  return stack<T>(batch, &get_weather);
}

template <typename T>
EvalResult<T> evaluate(const Co2Model<T>& model, std::span<const data::Sample> samples, const data::NormStats& norm,
                       const TrainConfig& config) {
  return evaluate_impl(model, samples, norm, config);
}

template <typename T>
EvalResult<T> evaluate(const No2Model<T>& model, std::span<const data::Sample> samples, const data::NormStats& norm,
                       const TrainConfig& config) {
  return evaluate_impl(model, samples, norm, config);
}

template <typename T>
std::vector<HistoryRecord> train_loop(Co2Model<T>& model, const data::Dataset& dataset, const TrainConfig& config,
                                      const TrainHooks& hooks) {
  return train_impl(model, dataset, config, hooks);
}

template <typename T>
std::vector<HistoryRecord> train_loop(No2Model<T>& model, const data::Dataset& dataset, const TrainConfig& config,
                                      const TrainHooks& hooks) {
  return train_impl(model, dataset, config, hooks);
}

#define GEOVIT_INSTANTIATE_TRAINER(T)                                                                          \
  template Tensor<T> stack_s2<T>(std::span<const data::Sample* const>);                                        \
  template Tensor<T> stack_s5p<T>(std::span<const data::Sample* const>);                                       \
  template Tensor<T> stack_weather<T>(std::span<const data::Sample* const>);                                   \
  template EvalResult<T> evaluate(const Co2Model<T>&, std::span<const data::Sample>, const data::NormStats&,    \
                                  const TrainConfig&);                                                         \
  template EvalResult<T> evaluate(const No2Model<T>&, std::span<const data::Sample>, const data::NormStats&,    \
                                  const TrainConfig&);                                                         \
  template std::vector<HistoryRecord> train_loop(Co2Model<T>&, const data::Dataset&, const TrainConfig&,       \
                                                 const TrainHooks&);                                           \
  template std::vector<HistoryRecord> train_loop(No2Model<T>&, const data::Dataset&, const TrainConfig&,       \
                                                 const TrainHooks&);

GEOVIT_INSTANTIATE_TRAINER(float)
GEOVIT_INSTANTIATE_TRAINER(double)

#undef GEOVIT_INSTANTIATE_TRAINER

}  // namespace geovit::train
