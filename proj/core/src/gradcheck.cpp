#include "geovit/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "geovit/backbone.hpp"
#include "geovit/dataset.hpp"
#include "geovit/layers.hpp"
#include "geovit/losses.hpp"
#include "geovit/ops.hpp"
#include "geovit/rng.hpp"
#include "geovit/trainer.hpp"

namespace geovit::gradcheck {
namespace {

using TensorD = Tensor<double>;

TensorD random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal() * scale;
  return TensorD(std::move(shape), std::move(v), true);
}

/// sum(x * w) for a fixed weight w, recorded as its own node so that a fault
/// in any library op stays attributable to that op.
TensorD probe(const TensorD& x, const std::vector<double>& w) {
  const auto xd = x.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < xd.size(); ++i) acc += xd[i] * w[i];
  TensorD out = TensorD::scalar(acc);
  if (auto* tape = Tape<double>::active(); tape && x.requires_grad()) {
    auto ix = x.impl();
    tape->record("gradcheck_probe", {ix}, out.impl(), [ix, w](std::span<const double> g) {
      auto gx = ix->grad_buffer();
      for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g[0] * w[i];
    });
  }
  return out;
}

/// Wraps `op` into a LossFn with a seeded random probe weight sized on first use.
LossFn probed(std::function<TensorD(const std::vector<TensorD>&)> op, std::uint64_t seed) {
  auto weights = std::make_shared<std::vector<double>>();
  return [op = std::move(op), weights, seed](const std::vector<TensorD>& in) {
    TensorD out = op(in);
    if (weights->size() != out.numel()) {
      Rng rng(seed);
      weights->resize(out.numel());
      for (auto& w : *weights) w = rng.uniform(-1.0, 1.0);
    }
    return probe(out, *weights);
  };
}

std::vector<std::size_t> pick_entries(std::size_t n, const Options& o, std::uint64_t salt) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (o.max_entries == 0 || o.max_entries >= n) return idx;
  Rng rng(derive_seed(o.seed, salt));
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  idx.resize(o.max_entries);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

Result check(const std::string& label, const LossFn& f, std::vector<TensorD> inputs,
             const std::vector<std::string>& names, const Options& options) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    Tape<double> tape;
    TensorD loss = f(inputs);
    tape.backward(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto g = inputs[i].grad();
      analytic[i] = g.empty() ? std::vector<double>(inputs[i].numel(), 0.0) : std::vector<double>(g.begin(), g.end());
    }
  }

  Result result;
  result.label = label;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    InputResult ir;
    ir.name = i < names.size() ? names[i] : "input" + std::to_string(i);
    auto values = inputs[i].mutable_data();
    for (std::size_t k : pick_entries(values.size(), options, i)) {
      const double saved = values[k];
      values[k] = saved + options.step;
      const double up = f(inputs).item();
      values[k] = saved - options.step;
      const double down = f(inputs).item();
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(analytic[i][k], numeric, options.floor);
      if (!(err <= ir.max_rel_error)) {
        ir.max_rel_error = std::isnan(err) ? INFINITY : err;
        ir.worst_index = k;
        ir.worst_analytic = analytic[i][k];
        ir.worst_numeric = numeric;
      }
      ++ir.checked;
    }
    result.max_rel_error = std::max(result.max_rel_error, ir.max_rel_error);
    result.inputs.push_back(std::move(ir));
  }
  result.passed = result.max_rel_error < options.tolerance;
  for (auto& t : inputs) t.zero_grad();
  return result;
}

std::vector<Result> check_ops(std::uint64_t seed, const Options& options) {
  Rng rng(derive_seed(seed, 0x0905));
  std::vector<Result> out;
  std::uint64_t salt = 0;
  auto run = [&](const std::string& label, std::function<TensorD(const std::vector<TensorD>&)> op,
                 std::vector<TensorD> inputs) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < inputs.size(); ++i) names.push_back(label + ".arg" + std::to_string(i));
    out.push_back(check(label, probed(std::move(op), derive_seed(seed, ++salt)), std::move(inputs), names, options));
  };

  run("add", [](auto& in) { return add(in[0], in[1]); }, {random_tensor(rng, {3, 4}), random_tensor(rng, {4})});
  run("sub", [](auto& in) { return sub(in[0], in[1]); }, {random_tensor(rng, {2, 3, 2}), random_tensor(rng, {3, 2})});
  run("mul", [](auto& in) { return mul(in[0], in[1]); }, {random_tensor(rng, {3, 5}), random_tensor(rng, {3, 5})});
  run("scale", [](auto& in) { return scale(in[0], 1.7); }, {random_tensor(rng, {4, 3})});
  run("sum", [](auto& in) { return sum(in[0]); }, {random_tensor(rng, {3, 4})});
  run("sum_axis", [](auto& in) { return sum(in[0], 1); }, {random_tensor(rng, {2, 3, 4})});
  run("mean", [](auto& in) { return mean(in[0], 0); }, {random_tensor(rng, {5, 3})});
  run("reshape", [](auto& in) { return reshape(in[0], {4, 3}); }, {random_tensor(rng, {2, 6})});
  run("permute", [](auto& in) {
        const std::array<std::size_t, 3> axes{2, 0, 1};
        return permute(in[0], std::span<const std::size_t>(axes));
      },
      {random_tensor(rng, {2, 3, 4})});
  run("transpose", [](auto& in) { return transpose(in[0]); }, {random_tensor(rng, {2, 3, 5})});
  run("concat", [](auto& in) { return concat(std::span<const TensorD>(in), 1); },
      {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 2})});
  run("slice", [](auto& in) { return slice(in[0], 1, 1, 4); }, {random_tensor(rng, {3, 5})});
  run("broadcast", [](auto& in) { return broadcast(in[0], {3, 2, 4}); }, {random_tensor(rng, {4})});
  run("gather", [](auto& in) {
        const std::array<std::size_t, 5> idx{0, 3, 3, 5, 1};
        return gather(in[0], std::span<const std::size_t>(idx), {5});
      },
      {random_tensor(rng, {6})});
  run("matmul", [](auto& in) { return matmul(in[0], in[1]); }, {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4, 5})});
  run("matmul_batched", [](auto& in) { return matmul(in[0], in[1]); },
      {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 4, 2})});
  run("softmax", [](auto& in) { return softmax(in[0], 1); }, {random_tensor(rng, {3, 5})});
  run("log_softmax", [](auto& in) { return log_softmax(in[0], 0); }, {random_tensor(rng, {4, 3})});
  run("layer_norm", [](auto& in) { return layer_norm(in[0], in[1], in[2], 1e-5); },
      {random_tensor(rng, {3, 6}), random_tensor(rng, {6}), random_tensor(rng, {6})});
  run("gelu", [](auto& in) { return gelu(in[0]); }, {random_tensor(rng, {4, 4}, 2.0)});
  run("upsample_bilinear", [](auto& in) { return upsample_bilinear(in[0], 2); }, {random_tensor(rng, {2, 3, 3})});
  run("attention", [](auto& in) { return nn::multi_head_attention(in[0], in[1], in[2], 2); },
      {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 5, 4}), random_tensor(rng, {2, 5, 4})});
  return out;
}

Result check_model(Variant variant, std::uint64_t seed, const Options& options) {
  const ModelConfig config = ModelConfig::tiny(variant);
  data::GeneratorConfig gen = data::GeneratorConfig::for_model(config);
  const data::Dataset ds = data::synthesize(variant, 2, seed, gen);
  const std::vector<const data::Sample*> batch{&ds.samples.front()};
  const std::span<const data::Sample* const> view(batch);

  auto run_check = [&](auto& model, LossFn loss) {
    nn::init_params(model.params(), seed);
    std::vector<TensorD> params;
    std::vector<std::string> names;
    for (const auto& e : model.params().entries()) {
      params.push_back(e.value);
      names.push_back(e.name);
    }
    return check(std::string(to_string(variant)) + " model", loss, std::move(params), names, options);
  };

  if (variant == Variant::kCo2) {
    Co2Model<double> model(config);
    const TensorD images = train::stack_s2<double>(view);
    const TensorD weather = train::stack_weather<double>(view);
    train::Co2Labels labels;
    for (const auto* s : batch) {
      labels.masks.insert(labels.masks.end(), s->mask.pixels.begin(), s->mask.pixels.end());
      labels.fuel_classes.push_back(s->fuel_class);
      labels.targets.push_back(ds.norm.standardize(s->target));
    }
    return run_check(model, [&](const std::vector<TensorD>&) {
      return train::composite_loss(model.forward(images, weather), labels, train::LossWeights{}, 0.1).total;
    });
  }
  No2Model<double> model(config);
  const TensorD s2 = train::stack_s2<double>(view);
  const TensorD s5p = train::stack_s5p<double>(view);
  std::vector<double> targets;
  for (const auto* s : batch) targets.push_back(ds.norm.standardize(s->target));
  return run_check(model, [&](const std::vector<TensorD>&) {
    return train::mse_loss(model.forward(s2, s5p), std::span<const double>(targets));
  });
}

Report run(Variant variant, std::uint64_t seed, const Options& options) {
  Report report;
  report.model = check_model(variant, seed, options);
  if (!report.model.passed) {
    for (auto& r : check_ops(seed, options)) {
      if (!r.passed) report.op_failures.push_back(std::move(r));
    }
  }
  return report;
}

}  // namespace geovit::gradcheck
