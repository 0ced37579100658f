#include "geovit/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "geovit/errors.hpp"
#include "geovit/gvt_io.hpp"
#include "geovit/serialization.hpp"

namespace geovit {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kFormat = "geovit-checkpoint-1";

template <typename T>
const char* dtype_name() {
  return std::is_same_v<T, float> ? "f32" : "f64";
}

void clear_previous(const fs::path& dir) {
  if (!fs::exists(dir)) return;
  for (const auto& e : fs::directory_iterator(dir)) {
    const fs::path& p = e.path();
    if (e.is_regular_file() && (p.extension() == ".gvt" || p.filename() == kManifest)) fs::remove(p);
  }
}

}  // namespace

template <typename T>
void save_checkpoint(const ParamStore<T>& store, CheckpointMeta meta, const fs::path& dir) {
  fs::create_directories(dir);
  clear_previous(dir);
  json tensors = json::array();
  for (const auto& e : store.entries()) {
    const std::string base = e.name;
    write_tensor(dir / (base + ".gvt"), e.value);
    write_tensor(dir / (base + ".adam_m.gvt"), e.adam_m);
    write_tensor(dir / (base + ".adam_v.gvt"), e.adam_v);
    tensors.push_back({{"name", e.name},
                       {"shape", e.value.shape()},
                       {"file", base + ".gvt"},
                       {"adam_m", base + ".adam_m.gvt"},
                       {"adam_v", base + ".adam_v.gvt"}});
  }
  json manifest = {{"format", kFormat},
                   {"dtype", dtype_name<T>()},
                   {"step_count", store.step_count()},
                   {"config", model_config_to_json(meta.model)},
                   {"norm_stats", {{"target_mean", meta.norm.target_mean}, {"target_std", meta.norm.target_std}}},
                   {"top_r2", meta.top_r2 ? json(*meta.top_r2) : json(nullptr)},
                   {"run_config", meta.run_config},
                   {"tensors", tensors}};
  std::ofstream out(dir / kManifest);
  if (!out) throw FormatError("cannot write " + (dir / kManifest).string());
  out << manifest.dump(2) << '\n';
}

namespace {

json read_manifest(const fs::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw FormatError("checkpoint manifest not found: " + (dir / kManifest).string());
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (!m.is_object() || m.value("format", "") != kFormat) {
    throw FormatError("not a checkpoint manifest: " + (dir / kManifest).string());
  }
  return m;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const fs::path& dir) {
  json m = read_manifest(dir);
  CheckpointMeta meta;
  try {
    meta.model = model_config_from_json(m.at("config"));
    meta.step_count = m.at("step_count").get<std::int64_t>();
    meta.norm.target_mean = m.at("norm_stats").at("target_mean").get<double>();
    meta.norm.target_std = m.at("norm_stats").at("target_std").get<double>();
    if (m.contains("top_r2") && !m["top_r2"].is_null()) meta.top_r2 = m["top_r2"].get<double>();
    if (m.contains("run_config")) meta.run_config = m["run_config"];
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint manifest: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint config invalid: " + std::string(e.what()));
  }
  return meta;
}

template <typename T>
CheckpointMeta load_checkpoint(ParamStore<T>& store, const fs::path& dir) {
  CheckpointMeta meta = read_checkpoint_meta(dir);
  json m = read_manifest(dir);
  if (m.value("dtype", "") != dtype_name<T>()) {
    throw FormatError("checkpoint dtype " + m.value("dtype", std::string("?")) + " does not match model dtype " +
                      dtype_name<T>());
  }
  struct Staged {
    std::vector<T> value, m, v;
  };
  std::vector<Staged> staged;
  std::set<std::string> seen;
  for (const auto& t : m.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    if (!store.contains(name)) throw FormatError("checkpoint tensor '" + name + "' is not a model parameter");
    seen.insert(name);
  }
  for (const auto& e : store.entries()) {
    if (!seen.count(e.name)) throw FormatError("checkpoint is missing tensor '" + e.name + "'");
  }
  std::map<std::string, json> by_name;
  for (const auto& t : m.at("tensors")) by_name[t.at("name").get<std::string>()] = t;

  for (const auto& e : store.entries()) {
    const json& t = by_name.at(e.name);
    auto load = [&](const char* key) {
      GvtArray<T> a;
      try {
        a = read_gvt<T>(dir / t.at(key).get<std::string>());
      } catch (const FormatError& err) {
        throw FormatError("checkpoint tensor '" + e.name + "' (" + key + "): " + err.what());
      }
      if (a.shape != e.value.shape()) {
        throw FormatError("checkpoint tensor '" + e.name + "' has shape " + shape_to_string(a.shape) +
                          ", model expects " + shape_to_string(e.value.shape()));
      }
      return std::move(a.values);
    };
    staged.push_back(Staged{load("file"), load("adam_m"), load("adam_v")});
  }

  auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::ranges::copy(staged[i].value, entries[i].value.mutable_data().begin());
    std::ranges::copy(staged[i].m, entries[i].adam_m.mutable_data().begin());
    std::ranges::copy(staged[i].v, entries[i].adam_v.mutable_data().begin());
  }
  store.set_step_count(meta.step_count);
  return meta;
}

template void save_checkpoint<float>(const ParamStore<float>&, CheckpointMeta, const fs::path&);
template void save_checkpoint<double>(const ParamStore<double>&, CheckpointMeta, const fs::path&);
template CheckpointMeta load_checkpoint<float>(ParamStore<float>&, const fs::path&);
template CheckpointMeta load_checkpoint<double>(ParamStore<double>&, const fs::path&);

}  // namespace geovit
