#pragma once

// JSON forms of configurations, metrics and history records.
//
// Run configurations use one flat object whose keys mirror the fields of
// ModelConfig and TrainConfig (see flat_config_keys()).

#include <nlohmann/json.hpp>
#include <set>
#include <string>

#include "geovit/config.hpp"
#include "geovit/metrics.hpp"
#include "geovit/trainer.hpp"

namespace geovit {

nlohmann::json model_config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const train::TrainConfig& config);

/// Flat object holding both model and training keys.
nlohmann::json flat_config_to_json(const ModelConfig& model, const train::TrainConfig& training);

/// Applies the keys present in `flat` to `model` and `training`. Keys listed
/// in `passthrough` are accepted and ignored; any other unknown key, or a
/// value of the wrong type, raises ConfigError.
void apply_flat_config(const nlohmann::json& flat, ModelConfig& model, train::TrainConfig& training,
                       const std::set<std::string>& passthrough = {});

nlohmann::json metrics_to_json(const metrics::MetricsReport& report);
nlohmann::json loss_to_json(const metrics::LossBreakdown& loss);
nlohmann::json history_record_to_json(const train::HistoryRecord& record);

}  // namespace geovit
