#include "geovit/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "geovit/backbone.hpp"
#include "geovit/checkpoint.hpp"
#include "geovit/dataset.hpp"
#include "geovit/errors.hpp"
#include "geovit/gradcheck.hpp"
#include "geovit/gvt_io.hpp"
#include "geovit/layers.hpp"
#include "geovit/serialization.hpp"
#include "geovit/trainer.hpp"

namespace geovit::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kPathKeys = {"data", "out", "resume", "checkpoint", "report"};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Checks that dataset images fit the model configuration.
void check_data_fits(const data::Dataset& ds, const ModelConfig& c) {
  if (ds.samples.empty()) return;
  const Shape& s = ds.samples.front().s2_image.shape();
  if (s != Shape{c.s2_bands, c.image_size, c.image_size}) {
    throw ConfigError("dataset images are " + shape_to_string(s) + " but the model expects [" +
                      std::to_string(c.s2_bands) + ", " + std::to_string(c.image_size) + ", " +
                      std::to_string(c.image_size) + "]");
  }
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string variant;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t image_size = 64;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  const Variant variant = parse_variant(a.variant);
  ModelConfig mc;
  mc.variant = variant;
  mc.image_size = a.image_size;
  const data::Dataset ds = data::synthesize(variant, a.count, a.seed, data::GeneratorConfig::for_model(mc));
  data::save_dataset(ds, a.out);
  if (a.count == 0) err << "warning: --count 0 wrote an empty dataset to " << a.out << '\n';

  double lo = INFINITY, hi = -INFINITY, mean = 0.0;
  std::size_t plumes = 0;
  for (const auto& s : ds.samples) {
    lo = std::min(lo, s.target);
    hi = std::max(hi, s.target);
    mean += s.target;
    if (!s.mask.empty()) ++plumes;
  }
  out << "variant: " << to_string(variant) << '\n'
      << "count: " << ds.samples.size() << " (train " << ds.train_count << ", eval " << ds.eval().size() << ")\n";
  if (!ds.samples.empty()) {
    mean /= static_cast<double>(ds.samples.size());
    if (variant == Variant::kCo2) {
      out << "plume frequency: " << fmt(static_cast<double>(plumes) / static_cast<double>(ds.samples.size())) << '\n';
    }
    out << "target: mean " << fmt(mean) << ", min " << fmt(lo) << ", max " << fmt(hi) << '\n'
        << "train norm: mean " << fmt(ds.norm.target_mean) << ", std " << fmt(ds.norm.target_std) << '\n';
  }
  out << "wrote " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string variant;
  std::string data;
  std::string config;
  std::optional<std::int64_t> steps;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string resume;
};

template <typename Model>
int run_training(Model& model, const data::Dataset& ds, const train::TrainConfig& tc, const json& run_config,
                 std::optional<double> top_r2, const fs::path& out_dir, bool append, std::ostream& out) {
  fs::create_directories(out_dir);
  std::ofstream history(out_dir / "history.jsonl", append ? std::ios::app : std::ios::trunc);
  if (!history) throw FormatError("cannot write " + (out_dir / "history.jsonl").string());

  auto meta = [&] {
    CheckpointMeta m;
    m.model = model.config();
    m.norm = ds.norm;
    m.top_r2 = top_r2;
    m.run_config = run_config;
    return m;
  };

  train::TrainHooks hooks;
  hooks.top_r2 = top_r2;
  hooks.on_record = [&](const train::HistoryRecord& r) {
    history << history_record_to_json(r).dump() << '\n';
    history.flush();
    out << "step " << r.step << " loss " << fmt(r.train_loss.total);
    if (r.eval) out << " eval_r2 " << fmt(r.eval->r2);
    out << '\n';
  };
  hooks.on_eval = [&](std::int64_t, const metrics::MetricsReport& report, bool improved) {
    if (!improved) return;
    top_r2 = report.r2;
    save_checkpoint(model.params(), meta(), out_dir / "best");
  };

  const std::int64_t start = model.params().step_count();
  train::train_loop(model, ds, tc, hooks);
  save_checkpoint(model.params(), meta(), out_dir / "last");
  out << "trained steps " << start << " -> " << model.params().step_count() << "; checkpoint "
      << (out_dir / "last").string() << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  ModelConfig mc;
  train::TrainConfig tc;
  std::optional<CheckpointMeta> resumed;
  json file_cfg = json::object();
  if (!a.config.empty()) file_cfg = read_json_file(a.config);

  const std::string data_dir = !a.data.empty() ? a.data : file_cfg.value("data", std::string());
  const std::string out_dir = !a.out.empty() ? a.out : file_cfg.value("out", std::string());
  if (data_dir.empty()) throw ConfigError("train: --data is required");
  if (out_dir.empty()) throw ConfigError("train: --out is required");

  if (!a.resume.empty()) {
    resumed = read_checkpoint_meta(a.resume);
    ModelConfig ignored;
    apply_flat_config(resumed->run_config, ignored, tc, kPathKeys);
    mc = resumed->model;
    ModelConfig from_file = mc;
    apply_flat_config(file_cfg, from_file, tc, kPathKeys);
    if (!(from_file == mc)) throw ConfigError("config file model settings differ from the resumed checkpoint");
    if (!a.variant.empty() && parse_variant(a.variant) != mc.variant) {
      throw ConfigError("--variant " + a.variant + " differs from the resumed checkpoint");
    }
  } else {
    const bool variant_in_file = file_cfg.contains("variant");
    apply_flat_config(file_cfg, mc, tc, kPathKeys);
    if (!a.variant.empty()) {
      mc.variant = parse_variant(a.variant);
    } else if (!variant_in_file) {
      mc.variant = data::load_dataset(data_dir).variant;
    }
  }
  if (a.steps) tc.steps = *a.steps;
  if (a.seed) tc.seed = *a.seed;

  mc.validate();
  tc.validate();
  const data::Dataset ds = data::load_dataset(data_dir, mc.variant);
  check_data_fits(ds, mc);

  json run_config = flat_config_to_json(mc, tc);
  run_config["data"] = data_dir;
  run_config["out"] = out_dir;
  write_json_file(fs::path(out_dir) / "config.json", run_config);

  const std::optional<double> top_r2 = resumed ? resumed->top_r2 : std::nullopt;
  auto go = [&](auto& model) {
    if (resumed) {
      load_checkpoint(model.params(), a.resume);
    } else {
      nn::init_params(model.params(), tc.seed);
    }
    const bool append =
        resumed && fs::weakly_canonical(fs::path(a.resume)).parent_path() == fs::weakly_canonical(fs::path(out_dir));
    return run_training(model, ds, tc, run_config, top_r2, out_dir, append, out);
  };
  if (mc.variant == Variant::kCo2) {
    Co2Model<float> model(mc);
    return go(model);
  }
  No2Model<float> model(mc);
  return go(model);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string report;
  std::string dump_masks;
  std::string split = "eval";
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const CheckpointMeta meta = read_checkpoint_meta(a.checkpoint);
  train::TrainConfig tc;
  ModelConfig ignored;
  apply_flat_config(meta.run_config, ignored, tc, kPathKeys);
  const data::Dataset ds = data::load_dataset(a.data, meta.model.variant);
  check_data_fits(ds, meta.model);

  std::span<const data::Sample> samples;
  if (a.split == "eval") {
    samples = ds.eval();
  } else if (a.split == "train") {
    samples = ds.train();
  } else if (a.split == "all") {
    samples = ds.samples;
  } else {
    throw ConfigError("--split must be one of train, eval, all");
  }

  train::EvalResult<float> result;
  if (meta.model.variant == Variant::kCo2) {
    Co2Model<float> model(meta.model);
    load_checkpoint(model.params(), a.checkpoint);
    result = train::evaluate(model, samples, meta.norm, tc);
  } else {
    No2Model<float> model(meta.model);
    load_checkpoint(model.params(), a.checkpoint);
    result = train::evaluate(model, samples, meta.norm, tc);
  }

  json report = metrics_to_json(result.report);
  json config = meta.run_config;
  config["checkpoint"] = a.checkpoint;
  config["data"] = a.data;
  config["split"] = a.split;
  report["config"] = config;
  if (!a.report.empty()) write_json_file(a.report, report);

  if (!a.dump_masks.empty()) {
    if (result.masks.empty()) {
      err << "warning: --dump-masks ignored; variant " << to_string(meta.model.variant) << " predicts no masks\n";
    } else {
      fs::create_directories(a.dump_masks);
      for (std::size_t i = 0; i < result.masks.size(); ++i) {
        const auto& m = result.masks[i];
        char name[32];
        std::snprintf(name, sizeof name, "mask_%05zu.gvt", i);
        write_gvt<std::uint8_t>(fs::path(a.dump_masks) / name, {m.height, m.width}, m.pixels);
      }
    }
  }

  out << "variant: " << to_string(result.report.variant) << "  samples: " << result.report.n_samples << '\n';
  if (result.report.seg_iou) out << "seg_iou: " << fmt(*result.report.seg_iou) << '\n';
  if (result.report.cls_accuracy) out << "cls_accuracy: " << fmt(*result.report.cls_accuracy) << '\n';
  out << "r2: " << fmt(result.report.r2) << "  mae: " << fmt(result.report.mae) << "  mse: " << fmt(result.report.mse)
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string variant = "both";
  std::uint64_t seed = 0;
  std::size_t max_entries = 0;
  std::string fault_op;
  double fault_factor = 1.5;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<Variant> variants;
  if (a.variant == "both") {
    variants = {Variant::kCo2, Variant::kNo2};
  } else {
    variants = {parse_variant(a.variant)};
  }
  gradcheck::Options opt;
  opt.max_entries = a.max_entries;
  opt.seed = a.seed;

  struct FaultGuard {
    explicit FaultGuard(const GradcheckArgs& a) {
      if (!a.fault_op.empty()) testing::set_backward_fault(a.fault_op, a.fault_factor);
    }
    ~FaultGuard() { testing::set_backward_fault(""); }
  } guard(a);

  bool all_passed = true;
  for (Variant v : variants) {
    const gradcheck::Report r = gradcheck::run(v, a.seed, opt);
    std::size_t entries = 0;
    const gradcheck::InputResult* worst = nullptr;
    for (const auto& in : r.model.inputs) {
      entries += in.checked;
      if (!worst || in.max_rel_error > worst->max_rel_error) worst = &in;
    }
    out << "gradcheck " << to_string(v) << ": " << (r.passed() ? "PASS" : "FAIL")
        << " max_rel_error=" << fmt(r.model.max_rel_error, 4) << " entries=" << entries
        << " params=" << r.model.inputs.size() << '\n';
    if (!r.passed()) {
      all_passed = false;
      if (worst) out << "  worst parameter: " << worst->name << " (max_rel_error " << fmt(worst->max_rel_error, 4) << ")\n";
      for (const auto& op : r.op_failures) {
        out << "  failing op: " << op.label << " (max_rel_error " << fmt(op.max_rel_error, 4) << ")\n";
      }
      if (r.op_failures.empty()) out << "  no single op check fails; error arises in composition\n";
    }
  }
  return all_passed ? kExitOk : kExitNumerical;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GeoViT: vision transformer for emission monitoring on synthetic satellite scenes", "geovit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--variant", synth.variant, "co2 or no2")->required();
  s->add_option("--count", synth.count, "number of samples")->required();
  s->add_option("--seed", synth.seed, "base seed");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--image-size", synth.image_size, "image height and width in pixels");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--variant", tr.variant, "co2 or no2 (default: from config or dataset)");
  t->add_option("--data", tr.data, "dataset directory");
  t->add_option("--config", tr.config, "flat JSON config file");
  t->add_option("--steps", tr.steps, "total optimizer steps");
  t->add_option("--seed", tr.seed, "training seed");
  t->add_option("--out", tr.out, "output directory");
  t->add_option("--resume", tr.resume, "checkpoint directory to continue from");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint directory")->required();
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--report", ev.report, "JSON report path");
  e->add_option("--dump-masks", ev.dump_masks, "directory for predicted masks (.gvt)");
  e->add_option("--split", ev.split, "train, eval or all")->capture_default_str();

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  g->add_option("--variant", gc.variant, "co2, no2 or both")->capture_default_str();
  g->add_option("--seed", gc.seed, "seed for parameters and sample");
  g->add_option("--max-entries", gc.max_entries, "entries checked per parameter (0 = all)");
  g->add_option("--inject-fault", gc.fault_op, "test hook: corrupt the backward rule of this op")->group("");
  g->add_option("--fault-factor", gc.fault_factor, "test hook: gradient scale for --inject-fault")->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& ex) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out, err);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out, err);
    return cmd_gradcheck(gc, out);
  } catch (const NumericalError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitNumerical;
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ContractViolation& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace geovit::cli
