#pragma once

#include <string>
#include <vector>

#include <bg/energy/model.hpp>
#include <bg/estimate/profile.hpp>
#include <bg/train/rc.hpp>

namespace bg {

struct UmbrellaConfig {
  Vector centers;                 // strictly increasing window centers
  double k = 500.0;               // harmonic bias strength (unreduced)
  RCFunction rc;
  long steps_per_window = 50000;
  double sigma = 0.02;            // isotropic Gaussian proposal std
  long stride = 1;
  double equilibration = 0.1;     // fraction of each window discarded
  bool backward_sweep = true;     // revisit windows in reverse after the forward pass
  Vector x0;
};

struct UmbrellaWindow {
  double center = 0.0;
  bool backward = false;
  Vector rc_values;               // post-equilibration, every stride-th step
  double acceptance = 0.0;
};

struct UmbrellaResult {
  std::vector<UmbrellaWindow> windows;  // sweep order
  std::vector<std::string> warnings;
  Vector last;
};

// Sequential umbrella sampling along rc at relative temperature tau. Each
// window biases the reduced energy by k (r - c)^2 / (2 tau) and starts from
// the previous window's final configuration.
inline UmbrellaResult umbrella_sample(const EnergyModel& model,
                                      const UmbrellaConfig& cfg, double tau,
                                      Rng& rng) {
  const long n_win = cfg.centers.size();
  require(n_win >= 2, "umbrella: need at least 2 windows");
  for (long w = 1; w < n_win; ++w)
    require(cfg.centers[w] > cfg.centers[w - 1], "umbrella: centers must be increasing");
  require(cfg.k > 0.0, "umbrella: k must be > 0");
  require(cfg.steps_per_window >= 1, "umbrella: steps_per_window must be >= 1");
  require(cfg.stride >= 1, "umbrella: stride must be >= 1");
  require(cfg.equilibration >= 0.0 && cfg.equilibration < 1.0,
          "umbrella: equilibration must be in [0, 1)");
  require(cfg.x0.size() == model.dim(), "umbrella: x0 dimension mismatch");

  std::vector<long> order;
  for (long w = 0; w < n_win; ++w) order.push_back(w);
  if (cfg.backward_sweep)
    for (long w = n_win - 1; w >= 0; --w) order.push_back(w);

  const long equil = static_cast<long>(cfg.equilibration * static_cast<double>(cfg.steps_per_window));
  UmbrellaResult res;
  Vector x = cfg.x0;
  Vector prop(model.dim());
  for (std::size_t s = 0; s < order.size(); ++s) {
    const double c = cfg.centers[order[s]];
    UmbrellaWindow win;
    win.center = c;
    win.backward = s >= static_cast<std::size_t>(n_win);
    const auto biased = [&](const Vector& y) {
      const double dr = cfg.rc.value(y) - c;
      return model.energy(y) + 0.5 * cfg.k * dr * dr;
    };
    double u = biased(x);
    std::vector<double> recorded;
    long accepted = 0;
    for (long t = 1; t <= cfg.steps_per_window; ++t) {
      for (Eigen::Index i = 0; i < x.size(); ++i) prop[i] = x[i] + cfg.sigma * rng.normal();
      const double up = biased(prop);
      if (up <= u || rng.uniform() < std::exp(-(up - u) / tau)) {
        x = prop;
        u = up;
        ++accepted;
      }
      if (t > equil && (t - equil) % cfg.stride == 0) recorded.push_back(cfg.rc.value(x));
    }
    win.acceptance = static_cast<double>(accepted) / static_cast<double>(cfg.steps_per_window);
    win.rc_values = Eigen::Map<Vector>(recorded.data(), static_cast<Eigen::Index>(recorded.size()));
    res.windows.push_back(std::move(win));
  }
  res.last = x;
  return res;
}

// Per-window histogram counts over [lo, hi); values outside the range are dropped.
inline Matrix umbrella_histograms(const std::vector<UmbrellaWindow>& windows, int bins,
                                  double lo, double hi) {
  require(bins >= 1 && hi > lo, "umbrella_histograms: invalid grid");
  Matrix counts = Matrix::Zero(static_cast<Eigen::Index>(windows.size()), bins);
  const double width = (hi - lo) / bins;
  for (std::size_t w = 0; w < windows.size(); ++w)
    for (Eigen::Index i = 0; i < windows[w].rc_values.size(); ++i) {
      const double r = windows[w].rc_values[i];
      if (r < lo || r >= hi) continue;
      const int b = std::min(bins - 1, static_cast<int>((r - lo) / width));
      counts(static_cast<Eigen::Index>(w), b) += 1.0;
    }
  return counts;
}

struct WhamResult {
  FreeEnergyProfile profile;
  Vector window_free_energy;  // reduced, anchored at window 0
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

// Self-consistent histogram reweighting. counts is n_windows x n_bins;
// window w biases bin b by k (r_b - c_w)^2 / (2 tau) in reduced units.
inline WhamResult wham(const Matrix& counts, const Vector& centers, double k,
                       double tau, double lo, double hi, double tol = 1e-8,
                       int max_iter = 100000) {
  const Eigen::Index n_win = counts.rows();
  const Eigen::Index n_bin = counts.cols();
  require(centers.size() == n_win, "wham: centers/counts mismatch");
  require((counts.array() >= 0.0).all(), "wham: negative counts");
  const double width = (hi - lo) / static_cast<double>(n_bin);

  Vector r_center(n_bin);
  for (Eigen::Index b = 0; b < n_bin; ++b) r_center[b] = lo + (b + 0.5) * width;
  Matrix bias(n_win, n_bin);  // reduced bias energy c_{w,b}
  for (Eigen::Index w = 0; w < n_win; ++w)
    for (Eigen::Index b = 0; b < n_bin; ++b) {
      const double dr = r_center[b] - centers[w];
      bias(w, b) = 0.5 * k * dr * dr / tau;
    }

  const Vector n_w = counts.rowwise().sum();
  const Vector n_b = counts.colwise().sum().transpose();
  require(n_w.sum() > 0.0, "wham: all histograms empty");

  WhamResult res;
  for (Eigen::Index w = 0; w + 1 < n_win; ++w) {
    bool overlap = false;
    for (Eigen::Index b = 0; b < n_bin; ++b)
      if (counts(w, b) > 0.0 && counts(w + 1, b) > 0.0) { overlap = true; break; }
    if (!overlap)
      res.warnings.push_back("wham: no histogram overlap between windows " + std::to_string(w) +
                             " and " + std::to_string(w + 1) + " (centers " +
                             std::to_string(centers[w]) + ", " + std::to_string(centers[w + 1]) + ")");
  }

  Vector f = Vector::Zero(n_win);  // reduced window free energies
  Vector p = Vector::Zero(n_bin);
  for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
    for (Eigen::Index b = 0; b < n_bin; ++b) {
      if (n_b[b] == 0.0) { p[b] = 0.0; continue; }
      // denominator via log-sum-exp over windows for numeric range
      Vector t(n_win);
      for (Eigen::Index w = 0; w < n_win; ++w)
        t[w] = std::log(n_w[w]) + f[w] - bias(w, b);
      p[b] = n_b[b] * std::exp(-log_sum_exp(t));
    }
    p /= p.sum();
    Vector f_new(n_win);
    for (Eigen::Index w = 0; w < n_win; ++w) {
      Vector t(n_bin);
      for (Eigen::Index b = 0; b < n_bin; ++b)
        t[b] = p[b] > 0.0 ? std::log(p[b]) - bias(w, b) : -std::numeric_limits<double>::infinity();
      f_new[w] = -log_sum_exp(t);
    }
    f_new.array() -= f_new[0];
    const double delta = (f_new - f).cwiseAbs().maxCoeff();
    f = f_new;
    if (delta < tol) { res.converged = true; break; }
  }

  res.window_free_energy = f;
  res.profile.centers = r_center;
  res.profile.edges.resize(n_bin + 1);
  for (Eigen::Index b = 0; b <= n_bin; ++b) res.profile.edges[b] = lo + b * width;
  res.profile.free_energy.resize(n_bin);
  res.profile.mass = n_b;
  res.profile.masked.assign(static_cast<std::size_t>(n_bin), false);
  double fmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index b = 0; b < n_bin; ++b) {
    if (p[b] > 0.0) {
      res.profile.free_energy[b] = -std::log(p[b] / width);
      fmin = std::min(fmin, res.profile.free_energy[b]);
    } else {
      res.profile.free_energy[b] = std::numeric_limits<double>::quiet_NaN();
      res.profile.masked[static_cast<std::size_t>(b)] = true;
    }
  }
  require(std::isfinite(fmin), "wham: empty profile");
  for (Eigen::Index b = 0; b < n_bin; ++b)
    if (!res.profile.masked[static_cast<std::size_t>(b)]) res.profile.free_energy[b] -= fmin;
  return res;
}

}  // namespace bg
