#pragma once

#include <bg/estimate/reweight.hpp>

namespace bg {

// Free energy along a coordinate from weighted samples: -log of the weighted
// histogram density, anchored so the lowest unmasked bin is 0. A bin's mass
// is its normalized weight times the sample count ("how many samples' worth
// of weight"); bins with mass below min_mass are masked.
struct FreeEnergyProfile {
  Vector centers;
  Vector edges;
  Vector free_energy;  // NaN where masked
  Vector mass;         // in units of samples
  std::vector<char> masked;

  Eigen::Index n_unmasked() const {
    Eigen::Index k = 0;
    for (char m : masked) k += (m == 0);
    return k;
  }
};

inline FreeEnergyProfile free_energy_profile(const Vector& r, const Vector& log_w,
                                             int bins, double lo, double hi,
                                             double min_mass = 0.01) {
  require(r.size() == log_w.size(), "free_energy_profile: size mismatch");
  if (bins < 2) throw ConfigError("free_energy_profile: bins must be >= 2");
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ConfigError("free_energy_profile: bad range");
  if (r.size() == 0)
    throw EstimatorDegenerateError("free_energy_profile: no valid samples");

  const double n = static_cast<double>(r.size());
  const double width = (hi - lo) / bins;
  const double lse = log_sum_exp(log_w);

  FreeEnergyProfile p;
  p.centers.resize(bins);
  p.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) p.edges[b] = lo + b * width;
  for (int b = 0; b < bins; ++b) p.centers[b] = lo + (b + 0.5) * width;
  Vector massv = Vector::Zero(bins);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r[i] < lo || r[i] >= hi) continue;
    const int b = std::min(bins - 1, static_cast<int>((r[i] - lo) / width));
    massv[b] += std::exp(log_w[i] - lse) * n;
  }
  p.mass = massv;
  p.free_energy.setConstant(bins, std::numeric_limits<double>::quiet_NaN());
  p.masked.assign(static_cast<std::size_t>(bins), 1);
  double fmin = std::numeric_limits<double>::infinity();
  for (int b = 0; b < bins; ++b) {
    if (massv[b] < min_mass) continue;
    p.masked[static_cast<std::size_t>(b)] = 0;
    p.free_energy[b] = -std::log(massv[b] / (n * width));
    fmin = std::min(fmin, p.free_energy[b]);
  }
  if (!std::isfinite(fmin))
    throw EstimatorDegenerateError("free_energy_profile: all bins masked");
  for (int b = 0; b < bins; ++b)
    if (!p.masked[static_cast<std::size_t>(b)]) p.free_energy[b] -= fmin;
  return p;
}

}  // namespace bg
