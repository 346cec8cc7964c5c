#pragma once

#include <bg/common.hpp>

namespace bg {

// Latent-side reduced energy of the Gaussian prior N(0, tau I):
// u_Z(z) = |z|^2 / (2 tau), up to an additive constant.
inline double prior_energy(const Vector& z, double tau = 1.0) {
  return 0.5 * z.squaredNorm() / tau;
}

inline Vector prior_energies(const Matrix& z, double tau = 1.0) {
  return 0.5 * z.rowwise().squaredNorm() / tau;
}

// Entropy of N(0, tau I) in d dimensions: d/2 log(2 pi e tau).
inline double gaussian_entropy(Eigen::Index d, double tau = 1.0) {
  return 0.5 * static_cast<double>(d) * std::log(2.0 * M_PI * M_E * tau);
}

}  // namespace bg
