#include "geovit/serialization.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "geovit/errors.hpp"

namespace geovit {
using nlohmann::json;

namespace {

/// Binds a flat key to a typed field.
struct Field {
  std::function<json()> get;
  std::function<void(const json&)> set;
};

template <typename V>
Field bind(V& ref) {
  return Field{[&ref] { return json(ref); }, [&ref](const json& j) { ref = j.get<V>(); }};
}

std::map<std::string, Field> model_fields(ModelConfig& c) {
  std::map<std::string, Field> f;
  f["variant"] = Field{[&c] { return json(std::string(to_string(c.variant))); },
                       [&c](const json& j) { c.variant = parse_variant(j.get<std::string>()); }};
  f["image_size"] = bind(c.image_size);
  f["patch_size"] = bind(c.patch_size);
  f["embed_dim"] = bind(c.embed_dim);
  f["num_heads"] = bind(c.num_heads);
  f["depth"] = bind(c.depth);
  f["ffn_ratio"] = bind(c.ffn_ratio);
  f["tap_depths"] = bind(c.tap_depths);
  f["s2_bands"] = bind(c.s2_bands);
  f["s5p_bands"] = bind(c.s5p_bands);
  f["num_fuel_classes"] = bind(c.num_fuel_classes);
  f["num_seg_classes"] = bind(c.num_seg_classes);
  f["decoder_dim"] = bind(c.decoder_dim);
  f["head_hidden"] = bind(c.head_hidden);
  f["layer_norm_eps"] = bind(c.layer_norm_eps);
  return f;
}

std::map<std::string, Field> train_fields(train::TrainConfig& c) {
  std::map<std::string, Field> f;
  f["lr"] = bind(c.optimizer.lr);
  f["beta1"] = bind(c.optimizer.beta1);
  f["beta2"] = bind(c.optimizer.beta2);
  f["adam_eps"] = bind(c.optimizer.eps);
  f["weight_decay"] = bind(c.optimizer.weight_decay);
  f["label_smoothing"] = bind(c.label_smoothing);
  f["loss_weight_seg"] = bind(c.weights.seg);
  f["loss_weight_cls"] = bind(c.weights.cls);
  f["loss_weight_reg"] = bind(c.weights.reg);
  f["batch_size"] = bind(c.batch_size);
  f["steps"] = bind(c.steps);
  f["seed"] = bind(c.seed);
  f["eval_every"] = bind(c.eval_every);
  f["log_every"] = bind(c.log_every);
  f["augment"] = bind(c.augment);
  f["aug_crop"] = bind(c.augmentation.crop);
  f["aug_pad"] = bind(c.augmentation.pad);
  f["aug_flip"] = bind(c.augmentation.flip);
  f["aug_flip_probability"] = bind(c.augmentation.flip_probability);
  f["aug_photometric"] = bind(c.augmentation.photometric);
  f["aug_brightness_min"] = bind(c.augmentation.brightness_min);
  f["aug_brightness_max"] = bind(c.augmentation.brightness_max);
  f["aug_contrast_min"] = bind(c.augmentation.contrast_min);
  f["aug_contrast_max"] = bind(c.augmentation.contrast_max);
  return f;
}

json dump_fields(const std::map<std::string, Field>& fields) {
  json out = json::object();
  for (const auto& [key, field] : fields) out[key] = field.get();
  return out;
}

void apply_fields(const json& j, std::map<std::string, Field>& fields, const std::set<std::string>& passthrough) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) {
      if (passthrough.count(key)) continue;
      throw ConfigError("unknown configuration key '" + key + "'");
    }
    try {
      it->second.set(value);
    } catch (const json::exception& e) {
      throw ConfigError("configuration key '" + key + "': " + e.what());
    }
  }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json model_config_to_json(const ModelConfig& config) {
  ModelConfig copy = config;
  return dump_fields(model_fields(copy));
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  auto fields = model_fields(c);
  apply_fields(j, fields, {});
  return c;
}

json train_config_to_json(const train::TrainConfig& config) {
  train::TrainConfig copy = config;
  return dump_fields(train_fields(copy));
}

json flat_config_to_json(const ModelConfig& model, const train::TrainConfig& training) {
  json out = model_config_to_json(model);
  out.update(train_config_to_json(training));
  return out;
}

void apply_flat_config(const json& flat, ModelConfig& model, train::TrainConfig& training,
                       const std::set<std::string>& passthrough) {
  auto fields = model_fields(model);
  fields.merge(train_fields(training));
  apply_fields(flat, fields, passthrough);
}

json loss_to_json(const metrics::LossBreakdown& loss) {
  return {{"total", number_or_null(loss.total)},
          {"seg", number_or_null(loss.seg)},
          {"cls", number_or_null(loss.cls)},
          {"reg", number_or_null(loss.reg)}};
}

json metrics_to_json(const metrics::MetricsReport& report) {
  json j = {{"variant", std::string(to_string(report.variant))},
            {"n_samples", report.n_samples},
            {"r2", number_or_null(report.r2)},
            {"mae", number_or_null(report.mae)},
            {"mse", number_or_null(report.mse)},
            {"loss", loss_to_json(report.loss)}};
  if (report.seg_iou) j["seg_iou"] = *report.seg_iou;
  if (report.cls_accuracy) j["cls_accuracy"] = *report.cls_accuracy;
  return j;
}

json history_record_to_json(const train::HistoryRecord& record) {
  json j = {{"step", record.step}, {"train_loss", loss_to_json(record.train_loss)}};
  if (record.eval) j["eval"] = metrics_to_json(*record.eval);
  if (record.top_r2) j["top_r2"] = *record.top_r2;
  return j;
}

}  // namespace geovit
