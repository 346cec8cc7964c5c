#pragma once

#include <bg/common.hpp>

namespace bg {

// Training-side energy cap: linear below e_high, logarithmic up to e_max,
// constant above. Continuous at both breakpoints; the derivative is 1, then
// 1/(E - e_high + 1), then 0. Estimators must use raw energies, never this.
inline double regularize_energy(double e, double e_high, double e_max = 1e20) {
  if (std::isnan(e)) return e;
  if (e < e_high) return e;
  if (e < e_max) return e_high + std::log(e - e_high + 1.0);
  return e_high + std::log(e_max - e_high + 1.0);
}

inline double regularize_energy_derivative(double e, double e_high,
                                           double e_max = 1e20) {
  if (std::isnan(e)) return 0.0;
  if (e < e_high) return 1.0;
  if (e < e_max) return 1.0 / (e - e_high + 1.0);
  return 0.0;
}

}  // namespace bg
