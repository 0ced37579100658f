#pragma once

// Checkpoint directory layout:
//   manifest.json            config, step count, normalization, tensor index
//   <param>.gvt              parameter values
//   <param>.adam_m.gvt       AdamW first moment
//   <param>.adam_v.gvt       AdamW second moment

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>

#include "geovit/config.hpp"
#include "geovit/dataset.hpp"
#include "geovit/param_store.hpp"

namespace geovit {

struct CheckpointMeta {
  ModelConfig model;
  data::NormStats norm;
  std::int64_t step_count = 0;
  std::optional<double> top_r2;
  nlohmann::json run_config = nlohmann::json::object();  // flat training config echo
};

/// Writes the store and metadata into `dir`, replacing any previous checkpoint there.
template <typename T>
void save_checkpoint(const ParamStore<T>& store, CheckpointMeta meta, const std::filesystem::path& dir);

/// Reads manifest.json only. FormatError when missing or malformed.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

/// Loads values and optimizer moments into `store`. Every tensor is read and
/// checked before anything is written, so on error (FormatError naming the
/// offending tensor) the store is left untouched.
template <typename T>
CheckpointMeta load_checkpoint(ParamStore<T>& store, const std::filesystem::path& dir);

}  // namespace geovit
