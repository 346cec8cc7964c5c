#pragma once

#include <bg/energy/model.hpp>
#include <bg/energy/prior.hpp>
#include <bg/flow/stack.hpp>

namespace bg {

// Generated batch with exact importance log-weights against the Boltzmann
// density at temperature tau. Weights are unnormalized and only ever used in
// ratios; invalid rows carry NaN weights and are excluded from estimators.
struct WeightedSamples {
  Matrix x;
  Matrix z;
  Vector log_weight;
  double tau = 1.0;
  std::vector<char> valid;
  Eigen::Index n_discarded = 0;

  Eigen::Index n_valid() const {
    return static_cast<Eigen::Index>(x.rows()) - n_discarded;
  }

  // Compacted copies with invalid rows removed.
  Vector valid_log_weights() const {
    Vector out(n_valid());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < log_weight.size(); ++i)
      if (valid[static_cast<std::size_t>(i)]) out[k++] = log_weight[i];
    return out;
  }

  Matrix valid_x() const {
    Matrix out(n_valid(), x.cols());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (valid[static_cast<std::size_t>(i)]) out.row(k++) = x.row(i);
    return out;
  }
};

// One-shot generation: z ~ N(0, tau I), x = F_zx(z),
// log w = -u(x)/tau + |z|^2/(2 tau) + log R_zx(z). Energies are raw, never
// capped: reweighting must target the true Boltzmann density.
inline WeightedSamples generate_weighted(const FlowStack& flow, const EnergyModel& model,
                                         Eigen::Index n, double tau, Rng& rng) {
  require(n >= 1, "generate_weighted: n must be >= 1");
  WeightedSamples s;
  s.tau = tau;
  s.z = std::sqrt(tau) * rng.normal_matrix(n, flow.z_width());
  ZXEval ev = flow_inverse_zx(flow, s.z, false);
  s.x = std::move(ev.x);
  s.valid = ev.valid;
  s.log_weight.setConstant(n, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!s.valid[static_cast<std::size_t>(i)]) {
      ++s.n_discarded;
      continue;
    }
    const double u = model.energy(s.x.row(i).transpose());
    const double uz = prior_energy(s.z.row(i).transpose(), tau);
    const double lw = -u / tau + uz + ev.logdet[i];
    if (!std::isfinite(lw)) {
      s.valid[static_cast<std::size_t>(i)] = 0;
      ++s.n_discarded;
      continue;
    }
    s.log_weight[i] = lw;
  }
  return s;
}

// Effective sample size (sum w)^2 / sum w^2 of the valid weights.
inline double effective_sample_size(const Vector& log_w) {
  if (log_w.size() == 0) return 0.0;
  return std::exp(2.0 * log_sum_exp(log_w) - log_sum_exp(2.0 * log_w));
}

// Self-normalized importance estimate sum(w O) / sum(w), stabilized against
// the maximum log-weight so any constant shift cancels exactly.
inline double weighted_expectation(const Vector& log_w, const Vector& observable) {
  require(log_w.size() == observable.size(), "weighted_expectation: size mismatch");
  if (log_w.size() == 0)
    throw EstimatorDegenerateError("weighted_expectation: no valid samples");
  const double m = log_w.maxCoeff();
  if (!std::isfinite(m))
    throw EstimatorDegenerateError("weighted_expectation: zero total weight");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < log_w.size(); ++i) {
    const double w = std::exp(log_w[i] - m);
    num += w * observable[i];
    den += w;
  }
  if (den <= 0.0)
    throw EstimatorDegenerateError("weighted_expectation: zero total weight");
  return num / den;
}

}  // namespace bg
