#include "geovit/rng.hpp"

#include <cmath>
#include <numbers>

namespace geovit {

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

double Rng::truncated_normal(double stddev, double bound) {
  double z;
  do {
    z = normal();
  } while (std::abs(z) > bound);
  return z * stddev;
}

}  // namespace geovit
