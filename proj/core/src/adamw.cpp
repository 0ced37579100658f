#include "geovit/adamw.hpp"

#include <cmath>

#include "geovit/errors.hpp"

namespace geovit::train {

void AdamWConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("adamw: lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adamw: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adamw: eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("adamw: weight_decay must be non-negative");
}

template <typename T>
void adamw_step(ParamStore<T>& store, const AdamWConfig& config) {
  for (const auto& e : store.entries()) {
    if (!e.value.has_grad()) throw ContractViolation("adamw: parameter '" + e.name + "' has no gradient");
  }
  const std::int64_t t = store.step_count() + 1;
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(config.beta1, static_cast<double>(t)));
  const T bc2 = static_cast<T>(1.0 - std::pow(config.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(config.lr), eps = static_cast<T>(config.eps);
  const T decay = static_cast<T>(1.0 - config.lr * config.weight_decay);
  for (auto& e : store.entries()) {
    auto theta = e.value.mutable_data();
    const auto g = e.value.grad();
    auto m = e.adam_m.mutable_data();
    auto v = e.adam_v.mutable_data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] / bc1;
      const T v_hat = v[i] / bc2;
      theta[i] = theta[i] * decay - lr * (m_hat / (std::sqrt(v_hat) + eps));
    }
  }
  store.set_step_count(t);
}

template void adamw_step(ParamStore<float>&, const AdamWConfig&);
template void adamw_step(ParamStore<double>&, const AdamWConfig&);

}  // namespace geovit::train
