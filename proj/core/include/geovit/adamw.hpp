#pragma once

#include "geovit/param_store.hpp"

namespace geovit::train {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

/// One AdamW update of every entry in `store`, using the gradients currently
/// materialized on the parameters:
///
///   t += 1
///   m = b1 m + (1 - b1) g          v = b2 v + (1 - b2) g^2
///   m_hat = m / (1 - b1^t)         v_hat = v / (1 - b2^t)
///   theta = theta * (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)
///
/// The decay multiplier (1 - lr wd) is formed in double precision and
/// rounded once to T. Decay never enters the moment estimates.
template <typename T>
void adamw_step(ParamStore<T>& store, const AdamWConfig& config);

}  // namespace geovit::train
