#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "geovit/errors.hpp"
#include "geovit/serialization.hpp"

namespace geovit {
namespace {

using nlohmann::json;

TEST(ModelConfigJson, RoundTrip) {
  ModelConfig c = ModelConfig::tiny(Variant::kNo2);
  c.head_hidden = 7;
  c.layer_norm_eps = 1e-6;
  EXPECT_EQ(model_config_from_json(model_config_to_json(c)), c);
  EXPECT_EQ(model_config_to_json(c).at("variant"), "no2");
}

TEST(ModelConfigJson, StrictAboutKeysAndTypes) {
  json j = model_config_to_json(ModelConfig{});
  j["embed_dimm"] = 3;
  try {
    model_config_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("embed_dimm"), std::string::npos);
  }
  j = model_config_to_json(ModelConfig{});
  j["depth"] = "six";
  try {
    model_config_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("depth"), std::string::npos);
  }
  EXPECT_THROW(model_config_from_json(json::array()), ConfigError);
}

TEST(FlatConfig, AppliesPartialOverrides) {
  ModelConfig m;
  train::TrainConfig t;
  apply_flat_config(json{{"lr", 0.01}, {"depth", 3}, {"tap_depths", {1, 3}}, {"aug_photometric", false}}, m, t);
  EXPECT_EQ(t.optimizer.lr, 0.01);
  EXPECT_EQ(m.depth, 3u);
  EXPECT_EQ(m.tap_depths, (std::vector<std::size_t>{1, 3}));
  EXPECT_FALSE(t.augmentation.photometric);
  EXPECT_EQ(t.batch_size, 8u);
}

TEST(FlatConfig, RoundTripAndPassthrough) {
  ModelConfig m = ModelConfig::tiny(Variant::kCo2);
  train::TrainConfig t;
  t.steps = 123;
  t.seed = 9;
  t.weights.cls = 0.5;
  json j = flat_config_to_json(m, t);
  j["data"] = "somewhere";
  ModelConfig m2;
  train::TrainConfig t2;
  EXPECT_THROW(apply_flat_config(j, m2, t2), ConfigError);
  apply_flat_config(j, m2, t2, {"data"});
  EXPECT_EQ(m2, m);
  EXPECT_EQ(flat_config_to_json(m2, t2).dump(), flat_config_to_json(m, t).dump());
}

TEST(MetricsJson, SchemaPerVariant) {
  metrics::MetricsReport r;
  r.variant = Variant::kCo2;
  r.n_samples = 4;
  r.seg_iou = 0.5;
  r.cls_accuracy = 0.75;
  r.r2 = 0.25;
  r.loss = {1.0, 0.5, 0.25, 0.25};
  json j = metrics_to_json(r);
  for (const char* key : {"variant", "n_samples", "r2", "mae", "mse", "loss", "seg_iou", "cls_accuracy"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["loss"]["total"], 1.0);
  r.variant = Variant::kNo2;
  r.seg_iou.reset();
  r.cls_accuracy.reset();
  r.r2 = std::numeric_limits<double>::quiet_NaN();
  j = metrics_to_json(r);
  EXPECT_FALSE(j.contains("seg_iou"));
  EXPECT_FALSE(j.contains("cls_accuracy"));
  EXPECT_TRUE(j["r2"].is_null());
  EXPECT_NO_THROW(json::parse(j.dump()));
}

TEST(HistoryJson, OptionalFields) {
  train::HistoryRecord rec;
  rec.step = 10;
  json j = history_record_to_json(rec);
  EXPECT_EQ(j["step"], 10);
  EXPECT_FALSE(j.contains("eval"));
  rec.eval = metrics::MetricsReport{};
  rec.top_r2 = 0.3;
  j = history_record_to_json(rec);
  EXPECT_TRUE(j.contains("eval"));
  EXPECT_EQ(j["top_r2"], 0.3);
}

}  // namespace
}  // namespace geovit
