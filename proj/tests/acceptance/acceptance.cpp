// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Pass criterion numbers as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <type_traits>
#include <unistd.h>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "geovit/adamw.hpp"
#include "geovit/augment.hpp"
#include "geovit/backbone.hpp"
#include "geovit/checkpoint.hpp"
#include "geovit/cli.hpp"
#include "geovit/gradcheck.hpp"
#include "geovit/losses.hpp"
#include "geovit/metrics.hpp"
#include "geovit/serialization.hpp"
#include "geovit/trainer.hpp"

namespace fs = std::filesystem;
using namespace geovit;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed checks; the first few messages are kept for the report.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) messages_ += (messages_.empty() ? "" : "; ") + what;
  }
  Outcome outcome(std::string summary) const {
    if (failures_ == 0) return {true, summary + ", " + std::to_string(checks_) + " checks"};
    return {false, std::to_string(failures_) + "/" + std::to_string(checks_) + " checks failed: " + messages_};
  }

 private:
  std::size_t checks_ = 0, failures_ = 0;
  std::string messages_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

class ScratchDir {
 public:
  ScratchDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("geovit_accept_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

template <typename T>
Tensor<T> random_tensor(Rng& rng, const Shape& shape, double scale = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, scale));
  return Tensor<T>(shape, std::move(v));
}

std::vector<std::size_t> random_perm(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

// 1 ------------------------------------------------------------------------
Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  double worst = 0.0;
  std::size_t entries = 0;
  for (Variant v : {Variant::kCo2, Variant::kNo2}) {
    const auto report = gradcheck::run(v, 0);
    worst = std::max(worst, report.model.max_rel_error);
    for (const auto& in : report.model.inputs) entries += in.checked;
    c.expect(report.passed(), std::string(to_string(v)) + " max_rel_error " + fmt(report.model.max_rel_error));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(secs < 120.0, "runtime " + fmt(secs) + " s exceeds 120 s");
  return c.outcome("max_rel_error " + fmt(worst) + " over " + std::to_string(entries) + " entries in " + fmt(secs) + " s");
}

// 2 ------------------------------------------------------------------------
Outcome attention_invariants() {
  Checker c;
  for (std::uint64_t seed = 0; seed < 128; ++seed) {
    Rng rng(derive_seed(2, seed));
    const std::size_t heads = 1 + rng.below(4), dk = 1 + rng.below(8), d = heads * dk;
    const std::size_t nq = 1 + rng.below(12), nk = 1 + rng.below(12);
    const double spread = rng.uniform(0.1, 4.0);
    const std::string tag = "seed " + std::to_string(seed);

    // single key: every query returns the value row
    auto q = random_tensor<double>(rng, {nq, d}, spread);
    auto k1 = random_tensor<double>(rng, {1, d}, spread);
    auto v1 = random_tensor<double>(rng, {1, d});
    auto out = nn::multi_head_attention(q, k1, v1, heads);
    double err = 0.0;
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < d; ++j) err = std::max(err, std::abs(out.data()[i * d + j] - v1.data()[j]));
    c.expect(err < 1e-12, tag + " single-key error " + fmt(err));

    // identical keys: uniform weights, output = mean of values
    auto keys = broadcast(reshape(k1, {d}), {nk, d});
    auto v = random_tensor<double>(rng, {nk, d});
    Tensor<double> w;
    out = nn::multi_head_attention(q, keys, v, heads, &w);
    err = 0.0;
    for (double x : w.data()) err = std::max(err, std::abs(x - 1.0 / static_cast<double>(nk)));
    auto vm = mean(v, 0);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < d; ++j) err = std::max(err, std::abs(out.data()[i * d + j] - vm.data()[j]));
    c.expect(err < 1e-12, tag + " equal-keys error " + fmt(err));

    // row normalization in single precision
    auto qf = random_tensor<float>(rng, {nq, d}, spread);
    auto kf = random_tensor<float>(rng, {nk, d}, spread);
    auto vf = random_tensor<float>(rng, {nk, d});
    Tensor<float> wf;
    nn::multi_head_attention(qf, kf, vf, heads, &wf);
    err = 0.0;
    for (std::size_t r = 0; r < heads * nq; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        const float x = wf.data()[r * nk + j];
        c.expect(x >= 0.0f && x <= 1.0f, tag + " weight outside [0,1]");
        s += x;
      }
      err = std::max(err, std::abs(s - 1.0));
    }
    c.expect(err <= 1e-6, tag + " row-sum error " + fmt(err));

    // logits are q.k / sqrt(d_k)
    auto k = random_tensor<double>(rng, {nk, d}, spread);
    auto logits = nn::attention_logits(q, k, heads);
    err = 0.0;
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < nq; ++i)
        for (std::size_t j = 0; j < nk; ++j) {
          long double dot = 0;
          for (std::size_t t = 0; t < dk; ++t)
            dot += static_cast<long double>(q.data()[i * d + h * dk + t]) * k.data()[j * d + h * dk + t];
          const double expected = static_cast<double>(dot / std::sqrt(static_cast<long double>(dk)));
          const double got = logits.data()[(h * nq + i) * nk + j];
          err = std::max(err, std::abs(got - expected) / std::max(1.0, std::abs(expected)));
        }
    c.expect(err < 1e-12, tag + " logit scaling error " + fmt(err));
  }
  return c.outcome("128 seeded cases");
}

// 3 ------------------------------------------------------------------------
template <typename T>
Tensor<T> permute_tokens(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  std::vector<T> out(x.numel());
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>((s * n + perm[i]) * d), d,
                  out.begin() + static_cast<std::ptrdiff_t>((s * n + i) * d));
  return Tensor<T>(x.shape(), std::move(out));
}

Tensor<float> permute_patches(const Tensor<float>& img, std::size_t patch, const std::vector<std::size_t>& perm) {
  const std::size_t b = img.dim(0), c = img.dim(1), n = img.dim(2), g = n / patch;
  std::vector<float> out(img.numel());
  for (std::size_t s = 0; s < b * c; ++s)
    for (std::size_t t = 0; t < g * g; ++t)
      for (std::size_t dy = 0; dy < patch; ++dy)
        for (std::size_t dx = 0; dx < patch; ++dx) {
          const std::size_t src = perm[t];
          out[(s * n + (t / g) * patch + dy) * n + (t % g) * patch + dx] =
              img.data()[(s * n + (src / g) * patch + dy) * n + (src % g) * patch + dx];
        }
  return Tensor<float>(img.shape(), std::move(out));
}

Outcome permutation_properties() {
  Checker c;
  ModelConfig co2cfg;
  Co2Model<float> co2(co2cfg);
  nn::init_params(co2.params(), 3);
  auto& pos = co2.params().at("pos.table").value;
  std::fill(pos.mutable_data().begin(), pos.mutable_data().end(), 0.0f);
  double worst_enc = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(3, seed));
    auto tokens = random_tensor<float>(rng, {2, co2cfg.num_tokens(), co2cfg.embed_dim});
    auto perm = random_perm(rng, co2cfg.num_tokens());
    auto a = co2.encoder().encode(permute_tokens(tokens, perm));
    auto b = co2.encoder().encode(tokens);
    auto expected = permute_tokens(b.final_tokens, perm);
    double err = 0.0;
    for (std::size_t i = 0; i < expected.numel(); ++i)
      err = std::max(err, static_cast<double>(std::abs(a.final_tokens.data()[i] - expected.data()[i])));
    for (const auto& [depth, tap] : b.taps) {
      auto pt = permute_tokens(tap, perm);
      for (std::size_t i = 0; i < pt.numel(); ++i)
        err = std::max(err, static_cast<double>(std::abs(a.taps.at(depth).data()[i] - pt.data()[i])));
    }
    worst_enc = std::max(worst_enc, err);
    c.expect(err <= 1e-5, "encoder seed " + std::to_string(seed) + " error " + fmt(err));
  }

  ModelConfig no2cfg;
  no2cfg.variant = Variant::kNo2;
  No2Model<float> no2(no2cfg);
  nn::init_params(no2.params(), 4);
  auto& s5p_pos = no2.params().at("s5p_pos.table").value;
  std::fill(s5p_pos.mutable_data().begin(), s5p_pos.mutable_data().end(), 0.0f);
  double worst_no2 = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(4, seed));
    auto s2 = random_tensor<float>(rng, {2, 12, 64, 64}, 0.3);
    auto s5p = random_tensor<float>(rng, {2, 1, 64, 64});
    auto perm = random_perm(rng, no2cfg.num_tokens());
    auto a = no2.forward(s2, s5p);
    auto b = no2.forward(s2, permute_patches(s5p, no2cfg.patch_size, perm));
    double err = 0.0;
    for (std::size_t i = 0; i < 2; ++i) err = std::max(err, static_cast<double>(std::abs(a.data()[i] - b.data()[i])));
    worst_no2 = std::max(worst_no2, err);
    c.expect(err <= 1e-5, "no2 seed " + std::to_string(seed) + " error " + fmt(err));
  }
  return c.outcome("encoder max error " + fmt(worst_enc) + ", no2 max error " + fmt(worst_no2));
}

// 4 ------------------------------------------------------------------------
Outcome adamw_decay() {
  Checker c;
  train::AdamWConfig cfg;
  {
    Co2Model<float> m(ModelConfig{});
    nn::init_params(m.params(), 5);
    for (auto& e : m.params().entries()) {
      if (e.value.data()[0] == 0.0f) {
        // give zero-initialized tensors something to decay
        Rng rng(derive_seed(5, e.value.numel()));
        for (auto& x : e.value.mutable_data()) x = static_cast<float>(rng.normal(0.0, 1.0));
      }
    }
    std::vector<std::vector<float>> before;
    for (auto& e : m.params().entries()) {
      before.push_back(values(e.value));
      auto g = e.value.impl()->grad_buffer();
      std::fill(g.begin(), g.end(), 0.0f);
    }
    train::adamw_step(m.params(), cfg);
    const float factor = static_cast<float>(1.0 - cfg.lr * cfg.weight_decay);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const auto now = m.params().entries()[i].value.data();
      for (std::size_t j = 0; j < now.size(); ++j) mismatches += now[j] != before[i][j] * factor;
    }
    c.expect(mismatches == 0, std::to_string(mismatches) + " parameters not decayed exactly");
  }
  double worst = 0.0;
  {
    Co2Model<double> m(ModelConfig::tiny(Variant::kCo2));
    nn::init_params(m.params(), 6);
    Rng rng(6);
    std::vector<std::vector<double>> theta, grad;
    for (auto& e : m.params().entries()) {
      theta.push_back(values(e.value));
      auto g = e.value.impl()->grad_buffer();
      for (auto& x : g) x = rng.normal(0.0, 1e-2);
      grad.emplace_back(g.begin(), g.end());
    }
    train::adamw_step(m.params(), cfg);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const auto now = m.params().entries()[i].value.data();
      for (std::size_t j = 0; j < now.size(); ++j) {
        const double g = grad[i][j];
        const double m_hat = ((1 - cfg.beta1) * g) / (1 - cfg.beta1);
        const double v_hat = ((1 - cfg.beta2) * g * g) / (1 - cfg.beta2);
        const double expected = theta[i][j] * (1 - cfg.lr * cfg.weight_decay) - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        worst = std::max(worst, std::abs(now[j] - expected));
      }
    }
    c.expect(worst <= 1e-12, "first-step error " + fmt(worst));
  }
  return c.outcome("first-step max error " + fmt(worst));
}

// 5 ------------------------------------------------------------------------
Outcome label_smoothing() {
  Checker c;
  for (std::size_t k = 2; k <= 6; ++k)
    for (std::size_t y = 0; y < k; ++y)
      for (double eps : {0.0, 0.05, 0.1, 0.3, 0.999}) {
        const auto q = train::smoothed_target(k, y, eps);
        for (std::size_t j = 0; j < k; ++j) {
          const double expected = (1.0 - eps) * (j == y ? 1.0 : 0.0) + eps / static_cast<double>(k);
          c.expect(q[j] == expected, "target mismatch K=" + std::to_string(k) + " eps=" + fmt(eps));
        }
      }
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(5, seed));
    const std::size_t rows = 1 + rng.below(6), k = 2 + rng.below(5);
    auto logits = random_tensor<double>(rng, {rows, k}, 3.0);
    std::vector<std::size_t> y(rows);
    for (auto& v : y) v = rng.below(k);
    const double loss = train::smoothed_cross_entropy(logits, std::span<const std::size_t>(y), 0.0).item();
    long double plain = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      long double z = 0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<long double>(logits.data()[r * k + j]));
      plain -= std::log(std::exp(static_cast<long double>(logits.data()[r * k + y[r]])) / z);
    }
    plain /= rows;
    const double err = std::abs(loss - static_cast<double>(plain));
    worst = std::max(worst, err);
    c.expect(err <= 1e-7 * std::max(1.0, static_cast<double>(plain)), "eps=0 loss error " + fmt(err));
  }
  return c.outcome("eps=0 max error " + fmt(worst));
}

// 6 ------------------------------------------------------------------------
Outcome metric_oracles() {
  Checker c;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(derive_seed(6, seed));
    const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6);
    data::Mask a{h, w, std::vector<std::uint8_t>(h * w)}, b{h, w, std::vector<std::uint8_t>(h * w)};
    std::set<std::size_t> sa, sb;
    for (std::size_t i = 0; i < h * w; ++i) {
      if (rng.bernoulli(0.35)) a.pixels[i] = 1, sa.insert(i);
      if (rng.bernoulli(0.35)) b.pixels[i] = 1, sb.insert(i);
    }
    std::size_t inter = 0;
    std::set<std::size_t> uni(sa);
    uni.insert(sb.begin(), sb.end());
    for (auto i : sa) inter += sb.count(i);
    const double iou = uni.empty() ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni.size());
    c.expect(metrics::compute_iou(a, b) == iou, "iou mismatch seed " + std::to_string(seed));

    const std::size_t n = 2 + rng.below(30), k = 2 + rng.below(4);
    std::vector<std::size_t> pc(n), tc(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pc[i] = rng.below(k);
      tc[i] = rng.below(k);
      hits += pc[i] == tc[i];
    }
    c.expect(metrics::compute_accuracy(pc, tc) == static_cast<double>(hits) / static_cast<double>(n),
             "accuracy mismatch seed " + std::to_string(seed));

    std::vector<double> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.normal(0.0, 5.0);
      p[i] = y[i] + rng.normal(0.0, 2.0);
    }
    long double mean = 0, ss_res = 0, ss_tot = 0, abs_err = 0;
    for (double v : y) mean += v;
    mean /= n;
    for (std::size_t i = 0; i < n; ++i) {
      const long double r = static_cast<long double>(y[i]) - p[i];
      ss_res += r * r;
      abs_err += std::abs(r);
      ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    const auto m = metrics::compute_regression_metrics(p, y);
    c.expect(std::abs(m.r2 - static_cast<double>(1 - ss_res / ss_tot)) <= 1e-10, "r2 mismatch");
    c.expect(std::abs(m.mae - static_cast<double>(abs_err / n)) <= 1e-10, "mae mismatch");
    c.expect(std::abs(m.mse - static_cast<double>(ss_res / n)) <= 1e-10, "mse mismatch");
  }
  const std::vector<double> truth{1, 2, 3}, pred{1, 4, 3};
  c.expect(metrics::compute_regression_metrics(pred, truth).r2 == -1.0, "hand case R^2 != -1");
  return c.outcome("200 random cases plus R^2 = -1 hand case");
}

// 7 ------------------------------------------------------------------------
Outcome co2_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig mc;
  auto full = data::synthesize(Variant::kCo2, 10, 7, data::GeneratorConfig::for_model(mc));
  // evaluate on the training split itself
  data::Dataset ds;
  ds.variant = Variant::kCo2;
  ds.samples.assign(full.train().begin(), full.train().end());
  ds.samples.insert(ds.samples.end(), full.train().begin(), full.train().end());
  ds.train_count = full.train().size();
  ds.norm = full.norm;

  Co2Model<float> model(mc);
  nn::init_params(model.params(), 7);
  train::TrainConfig tc;
  tc.eval_every = 50;
  tc.log_every = 50;
  double iou = 0.0, acc = 0.0;
  std::int64_t reached = -1;
  train::TrainHooks hooks;
  hooks.on_eval = [&](std::int64_t, const metrics::MetricsReport& r, bool) {
    iou = r.seg_iou.value_or(0.0);
    acc = r.cls_accuracy.value_or(0.0);
  };
  for (std::int64_t steps = 50; steps <= 2000; steps += 50) {
    tc.steps = steps;
    train::train_loop(model, ds, tc, hooks);
    if (iou >= 0.9 && acc == 1.0) {
      reached = steps;
      break;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Checker c;
  c.expect(ds.train().size() == 8, "train split has " + std::to_string(ds.train().size()) + " samples");
  c.expect(reached > 0, "after 2000 steps IoU " + fmt(iou) + ", accuracy " + fmt(acc));
  c.expect(secs < 900.0, "runtime " + fmt(secs) + " s exceeds 15 min");
  return c.outcome("train IoU " + fmt(iou) + ", accuracy " + fmt(acc) + " at step " + std::to_string(reached) +
                   " in " + fmt(secs) + " s");
}

// 8 ------------------------------------------------------------------------
Outcome no2_learnability() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig mc;
  mc.variant = Variant::kNo2;
  auto ds = data::synthesize(Variant::kNo2, 640, 8, data::GeneratorConfig::for_model(mc));
  No2Model<float> model(mc);
  nn::init_params(model.params(), 8);
  train::TrainConfig tc;
  tc.eval_every = 250;
  tc.log_every = 250;
  double r2 = 0.0, shuffled = 0.0;
  std::int64_t reached = -1;
  for (std::int64_t steps = 250; steps <= 3000; steps += 250) {
    tc.steps = steps;
    train::train_loop(model, ds, tc);
    r2 = train::evaluate(model, ds.eval(), ds.norm, tc).report.r2;
    const auto mixed = data::shuffle_s5p(ds.eval(), 88);
    shuffled = train::evaluate(model, std::span<const data::Sample>(mixed), ds.norm, tc).report.r2;
    if (r2 >= 0.8 && r2 - shuffled >= 0.2) {
      reached = steps;
      break;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Checker c;
  c.expect(ds.train().size() == 512 && ds.eval().size() == 128, "split sizes");
  c.expect(reached > 0, "after 3000 steps eval R^2 " + fmt(r2) + ", shuffled " + fmt(shuffled));
  c.expect(secs < 1800.0, "runtime " + fmt(secs) + " s exceeds 30 min");
  return c.outcome("eval R^2 " + fmt(r2) + ", shuffled-S5P R^2 " + fmt(shuffled) + " at step " +
                   std::to_string(reached) + " in " + fmt(secs) + " s");
}

// 9 ------------------------------------------------------------------------
std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

template <typename T>
bool resume_is_bitwise(Variant v, const data::Dataset& ds, const fs::path& dir, std::string& why) {
  const ModelConfig mc = ModelConfig::tiny(v);
  train::TrainConfig tc;
  tc.batch_size = 4;
  tc.eval_every = 5;
  tc.log_every = 5;
  tc.seed = 9;
  auto make = [&](auto& model) { nn::init_params(model.params(), 9); };
  auto run = [&](auto tag) {
    using M = typename decltype(tag)::type;
    M a(mc), b(mc), b2(mc);
    make(a);
    make(b);
    tc.steps = 20;
    auto ha = train::train_loop(a, ds, tc);
    tc.steps = 10;
    auto hb = train::train_loop(b, ds, tc);
    CheckpointMeta meta{mc, ds.norm, 0, hb.empty() ? std::nullopt : hb.back().top_r2, {}};
    save_checkpoint(b.params(), meta, dir);
    auto loaded = load_checkpoint(b2.params(), dir);
    train::TrainHooks hooks;
    hooks.top_r2 = loaded.top_r2;
    tc.steps = 20;
    auto hc = train::train_loop(b2, ds, tc, hooks);
    for (std::size_t i = 0; i < a.params().size(); ++i) {
      const auto& x = a.params().entries()[i];
      const auto& y = b2.params().entries()[i];
      if (values(x.value) != values(y.value) || values(x.adam_m) != values(y.adam_m) ||
          values(x.adam_v) != values(y.adam_v)) {
        why = "parameter " + x.name + " differs after resume";
        return false;
      }
    }
    hb.insert(hb.end(), hc.begin(), hc.end());
    std::string sa, sb;
    for (const auto& r : ha) sa += history_record_to_json(r).dump() + "\n";
    for (const auto& r : hb) sb += history_record_to_json(r).dump() + "\n";
    if (sa != sb) {
      why = "history differs after resume";
      return false;
    }
    return true;
  };
  struct Co2Tag { using type = Co2Model<T>; };
  struct No2Tag { using type = No2Model<T>; };
  return v == Variant::kCo2 ? run(Co2Tag{}) : run(No2Tag{});
}

Outcome determinism() {
  Checker c;
  ScratchDir dir;
  c.expect(cli({"synth", "--variant", "co2", "--count", "10", "--image-size", "16", "--seed", "1", "--out",
                (dir / "data").string()}) == 0, "synth failed");
  nlohmann::json cfg = model_config_to_json(ModelConfig::tiny(Variant::kCo2));
  cfg["eval_every"] = 5;
  cfg["log_every"] = 5;
  cfg["batch_size"] = 4;
  std::ofstream(dir / "cfg.json") << cfg.dump();
  for (const char* run : {"r1", "r2"}) {
    c.expect(cli({"train", "--data", (dir / "data").string(), "--config", (dir / "cfg.json").string(), "--steps", "20",
                  "--seed", "3", "--out", (dir / run).string()}) == 0, "train failed");
  }
  const auto h1 = read_file(dir / "r1" / "history.jsonl");
  c.expect(!h1.empty() && h1 == read_file(dir / "r2" / "history.jsonl"), "same-seed history files differ");
  auto m1 = nlohmann::json::parse(read_file(dir / "r1" / "last" / "manifest.json"));
  auto m2 = nlohmann::json::parse(read_file(dir / "r2" / "last" / "manifest.json"));
  m1["run_config"].erase("out");
  m2["run_config"].erase("out");
  bool same_tensors = m1 == m2;
  for (const auto& t : m1["tensors"]) {
    for (const char* key : {"file", "adam_m", "adam_v"}) {
      const std::string f = t[key].get<std::string>();
      same_tensors = same_tensors && read_file(dir / "r1" / "last" / f) == read_file(dir / "r2" / "last" / f);
    }
  }
  c.expect(same_tensors, "same-seed checkpoints differ");

  // dataset round trip
  for (Variant v : {Variant::kCo2, Variant::kNo2}) {
    data::GeneratorConfig g;
    g.image_size = 16;
    g.coarse_grid = 4;
    auto ds = data::synthesize(v, 10, 11, g);
    const auto path = dir / ("ds_" + std::string(to_string(v)));
    data::save_dataset(ds, path);
    auto back = data::load_dataset(path);
    bool same = back.samples.size() == ds.samples.size() && back.norm == ds.norm && back.train_count == ds.train_count;
    for (std::size_t i = 0; same && i < ds.samples.size(); ++i) {
      const auto &a = ds.samples[i], &b = back.samples[i];
      same = values(a.s2_image) == values(b.s2_image) && a.mask == b.mask && a.target == b.target &&
             a.fuel_class == b.fuel_class && a.weather.has_value() == b.weather.has_value() &&
             a.s5p_image.has_value() == b.s5p_image.has_value() &&
             (!a.weather || values(*a.weather) == values(*b.weather)) &&
             (!a.s5p_image || values(*a.s5p_image) == values(*b.s5p_image));
    }
    c.expect(same, std::string(to_string(v)) + " dataset round trip not exact");

    std::string why;
    c.expect(resume_is_bitwise<float>(v, ds, dir / "ck_f32", why), std::string(to_string(v)) + " f32: " + why);
    c.expect(resume_is_bitwise<double>(v, ds, dir / "ck_f64", why), std::string(to_string(v)) + " f64: " + why);
  }
  return c.outcome("history, dataset, checkpoint and resume (f32, f64) exact");
}

// 10 -----------------------------------------------------------------------
Outcome augmentation_safety() {
  Checker c;
  train::AugmentConfig cfg;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(derive_seed(10, seed));
    const std::size_t n = 8 + rng.below(57);
    data::Sample s;
    std::vector<float> img(2 * n * n);
    s.mask = data::Mask{n, n, std::vector<std::uint8_t>(n * n)};
    for (std::size_t i = 0; i < n * n; ++i) {
      s.mask.pixels[i] = rng.bernoulli(0.3) ? 1 : 0;
      img[i] = static_cast<float>(i);  // coordinate band
      img[n * n + i] = static_cast<float>(s.mask.pixels[i]);
    }
    s.s2_image = Tensor<float>({2, n, n}, img);
    s.weather = Tensor<float>({3}, {0.f, 0.f, 0.f});
    const auto params = train::draw_augmentation(rng, cfg);
    auto geometric = params;
    geometric.brightness = geometric.contrast = 1.0;
    const auto a = train::apply_augmentation(s, geometric);
    bool aligned = true;
    for (std::size_t i = 0; i < n * n && aligned; ++i) {
      const auto src = static_cast<std::size_t>(a.s2_image.data()[i]);
      aligned = src < n * n && src == train::augment_source_index(i / n, i % n, n, params) &&
                a.mask.pixels[i] == s.mask.pixels[src] && a.s2_image.data()[n * n + i] == a.mask.pixels[i];
    }
    // the full draw, photometric included, moves mask pixels exactly like the geometry-only one
    const auto full = train::apply_augmentation(s, params);
    aligned = aligned && full.mask == a.mask && full.target == s.target && full.fuel_class == s.fuel_class;
    c.expect(aligned, "misaligned augmentation seed " + std::to_string(seed));
  }

  const ModelConfig mc = ModelConfig::tiny(Variant::kCo2);
  data::GeneratorConfig g = data::GeneratorConfig::for_model(mc);
  auto ds = data::synthesize(Variant::kCo2, 20, 12, g);
  Co2Model<float> model(mc);
  nn::init_params(model.params(), 12);
  train::TrainConfig base;
  base.steps = 30;
  base.eval_every = 1000;
  train::train_loop(model, ds, base);
  const auto ref = metrics_to_json(train::evaluate(model, ds.eval(), ds.norm, base).report).dump();
  for (int variant = 0; variant < 4; ++variant) {
    train::TrainConfig t = base;
    t.augment = variant != 0;
    t.augmentation.crop = variant != 1;
    t.augmentation.flip = variant != 2;
    t.augmentation.photometric = variant != 3;
    c.expect(metrics_to_json(train::evaluate(model, ds.eval(), ds.norm, t).report).dump() == ref,
             "eval metrics changed with augmentation flags " + std::to_string(variant));
  }
  return c.outcome("1000 seeded augmentations aligned, eval independent of augmentation flags");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"attention invariants", attention_invariants},
      {"permutation properties", permutation_properties},
      {"adamw decoupled decay", adamw_decay},
      {"label smoothing", label_smoothing},
      {"metric oracles", metric_oracles},
      {"co2 overfit", co2_overfit},
      {"no2 learnability", no2_learnability},
      {"determinism and persistence", determinism},
      {"augmentation safety", augmentation_safety},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  bool all_pass = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  return all_pass ? 0 : 1;
}
