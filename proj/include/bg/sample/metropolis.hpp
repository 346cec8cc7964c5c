#pragma once

#include <bg/energy/model.hpp>

namespace bg {

struct MetropolisConfig {
  double sigma = 0.1;  // isotropic Gaussian proposal std
  long steps = 1000;
  long stride = 1;  // record every stride-th step
  Vector x0;
};

struct MetropolisResult {
  Matrix trajectory;   // steps/stride frames
  Vector energies;     // raw reduced energy per recorded frame
  double acceptance = 0.0;
  Vector last;
};

// Local-step Metropolis Monte Carlo at relative temperature tau: proposals
// x' = x + sigma N(0, I), accepted with min(1, exp(-(u(x') - u(x)) / tau)).
inline MetropolisResult metropolis_chain(const EnergyModel& model,
                                         const MetropolisConfig& cfg, double tau,
                                         Rng& rng) {
  require(cfg.sigma >= 0.0, "metropolis: sigma must be >= 0");
  require(cfg.stride >= 1, "metropolis: stride must be >= 1");
  require(cfg.x0.size() == model.dim(), "metropolis: x0 dimension mismatch");
  require(cfg.x0.allFinite(), "metropolis: x0 must be finite");

  Vector x = cfg.x0;
  double u = model.energy(x);
  const long frames = cfg.steps / cfg.stride;
  MetropolisResult res;
  res.trajectory.resize(frames, model.dim());
  res.energies.resize(frames);
  long accepted = 0, rec = 0;
  Vector prop(model.dim());
  for (long t = 1; t <= cfg.steps; ++t) {
    for (Eigen::Index i = 0; i < x.size(); ++i) prop[i] = x[i] + cfg.sigma * rng.normal();
    const double up = model.energy(prop);
    if (up <= u || rng.uniform() < std::exp(-(up - u) / tau)) {
      x = prop;
      u = up;
      ++accepted;
    }
    if (t % cfg.stride == 0 && rec < frames) {
      res.trajectory.row(rec) = x.transpose();
      res.energies[rec] = u;
      ++rec;
    }
  }
  res.acceptance = static_cast<double>(accepted) / static_cast<double>(cfg.steps);
  res.last = x;
  return res;
}

}  // namespace bg
