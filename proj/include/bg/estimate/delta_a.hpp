#pragma once

#include <bg/estimate/reweight.hpp>

namespace bg {

// Standard error of the mean by bootstrap: standard deviation of resampled
// means. Deterministic under a fixed RNG state.
inline double bootstrap_error(const Vector& values, int resamples, Rng& rng) {
  require(values.size() > 0, "bootstrap_error: empty series");
  require(resamples >= 100, "bootstrap_error: need >= 100 resamples");
  const Eigen::Index n = values.size();
  Vector means(resamples);
  for (int b = 0; b < resamples; ++b) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      acc += values[static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)))];
    means[b] = acc / static_cast<double>(n);
  }
  const double mu = means.mean();
  return std::sqrt((means.array() - mu).square().sum() /
                   static_cast<double>(resamples - 1));
}

struct DeltaAEstimate {
  double tau;
  double delta_a;
  double std_err;
  Eigen::Index n_used;
};

// Free energy difference between the states covered by two generators:
// Delta A = <J_B> - <J_A> with J = u(F_zx(z))/tau - log R_zx(z) on a shared
// z batch (common random numbers, so swapping A and B flips the sign
// exactly). Energies are raw; errors are bootstrap over the per-sample
// differences.
inline DeltaAEstimate two_bg_free_energy_difference(const FlowStack& flow_a,
                                                    const FlowStack& flow_b,
                                                    const EnergyModel& model, double tau,
                                                    Eigen::Index n, Rng& rng,
                                                    int resamples = 200) {
  require(flow_a.z_width() == flow_b.z_width(),
          "two_bg_free_energy_difference: latent dimensions differ");
  require(n >= 2, "two_bg_free_energy_difference: need n >= 2");
  const Matrix z = std::sqrt(tau) * rng.normal_matrix(n, flow_a.z_width());
  ZXEval ea = flow_inverse_zx(flow_a, z, false);
  ZXEval eb = flow_inverse_zx(flow_b, z, false);
  std::vector<double> diff;
  diff.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!ea.valid[static_cast<std::size_t>(i)] || !eb.valid[static_cast<std::size_t>(i)])
      continue;
    const double ja = model.energy(ea.x.row(i).transpose()) / tau - ea.logdet[i];
    const double jb = model.energy(eb.x.row(i).transpose()) / tau - eb.logdet[i];
    if (std::isfinite(ja) && std::isfinite(jb)) diff.push_back(jb - ja);
  }
  if (diff.size() < 2)
    throw EstimatorDegenerateError("two_bg_free_energy_difference: too few valid pairs");
  Vector d = Eigen::Map<Vector>(diff.data(), static_cast<Eigen::Index>(diff.size()));
  DeltaAEstimate est;
  est.tau = tau;
  est.delta_a = d.mean();
  est.std_err = bootstrap_error(d, resamples, rng);
  est.n_used = d.size();
  return est;
}

// Convergence-tracking variant: the free energy difference from the tails of
// two training histories of J_KL values. The converged segment is the last
// `segment` fraction of each series.
inline DeltaAEstimate delta_a_from_histories(const Vector& j_a, const Vector& j_b,
                                             double tau, Rng& rng, double segment = 0.5,
                                             int resamples = 200) {
  require(segment > 0.0 && segment <= 1.0, "delta_a_from_histories: bad segment");
  const auto tail = [&](const Vector& v) {
    const Eigen::Index k = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(segment * static_cast<double>(v.size())));
    return Vector(v.tail(k));
  };
  const Vector ta = tail(j_a), tb = tail(j_b);
  DeltaAEstimate est;
  est.tau = tau;
  est.delta_a = tb.mean() - ta.mean();
  const double ea = bootstrap_error(ta, resamples, rng);
  const double eb = bootstrap_error(tb, resamples, rng);
  est.std_err = std::sqrt(ea * ea + eb * eb);
  est.n_used = ta.size() + tb.size();
  return est;
}

}  // namespace bg
