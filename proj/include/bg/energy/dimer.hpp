#pragma once

#include <bg/energy/model.hpp>

namespace bg {

// Bistable particle dimer in a dense two-dimensional bath of repulsive
// solvent particles. Coordinates alternate (x, y) per particle; particles 0
// and 1 form the dimer. Terms: harmonic restraints on the dimer center and y
// positions, a quartic double well in the dimer distance, box walls, and a
// 1/r^12 repulsion over all pairs except the dimer pair.
class ParticleDimer final : public EnergyModel {
 public:
  struct Params {
    double eps = 1.0;
    double sigma = 1.1;
    double k_d = 20.0;
    double d0 = 1.5;
    double a = 25.0;
    double b = 10.0;
    double c = -0.5;
    double l_box = 3.0;
    double k_box = 100.0;
    int n_solvent = 36;
  };

  ParticleDimer() : ParticleDimer(Params{}) {}
  explicit ParticleDimer(Params p)
      : EnergyModel(2 * (p.n_solvent + 2)), p_(p), n_(p.n_solvent + 2) {
    if (p.n_solvent < 0) throw ConfigError("dimer: n_solvent must be >= 0");
  }

  std::string name() const override { return "dimer"; }
  const Params& params() const { return p_; }

  int particle_count() const override { return n_; }
  int particle_dim() const override { return 2; }

  std::vector<std::vector<int>> identical_groups() const override {
    std::vector<int> dimer{0, 1}, solvent;
    for (int i = 2; i < n_; ++i) solvent.push_back(i);
    std::vector<std::vector<int>> g{dimer};
    if (!solvent.empty()) g.push_back(solvent);
    return g;
  }

  std::uint64_t singularity_events() const override { return singular_.load(); }

  static double dimer_distance(const Vector& x) {
    const double dx = x[0] - x[2], dy = x[1] - x[3];
    return std::sqrt(dx * dx + dy * dy);
  }

  // Quartic dimer bond as a function of s = d - d0.
  double bond_energy(double d) const {
    const double s = d - p_.d0;
    const double s2 = s * s;
    return (0.25 * p_.a + p_.c) * s2 * s2 - 0.5 * p_.b * s2;
  }

  double bond_energy_dd(double d) const {
    const double s = d - p_.d0;
    return (p_.a + 4.0 * p_.c) * s * s * s - p_.b * s;
  }

 protected:
  double energy_impl(const Vector& x) const override {
    return eval<false>(x, nullptr);
  }

  double energy_and_gradient_impl(const Vector& x, Vector& g) const override {
    return eval<true>(x, &g);
  }

 private:
  template <bool WithGrad>
  double eval(const Vector& x, Vector* g) const {
    double e = 0.0;
    // dimer restraints
    const double cx = x[0] + x[2];
    e += p_.k_d * (cx * cx + x[1] * x[1] + x[3] * x[3]);
    if constexpr (WithGrad) {
      (*g)[0] += 2.0 * p_.k_d * cx;
      (*g)[2] += 2.0 * p_.k_d * cx;
      (*g)[1] += 2.0 * p_.k_d * x[1];
      (*g)[3] += 2.0 * p_.k_d * x[3];
    }
    // dimer bond
    const double ddx = x[0] - x[2], ddy = x[1] - x[3];
    const double d = std::max(std::sqrt(ddx * ddx + ddy * ddy), 1e-12);
    e += bond_energy(d);
    if constexpr (WithGrad) {
      const double f = bond_energy_dd(d) / d;
      (*g)[0] += f * ddx;
      (*g)[1] += f * ddy;
      (*g)[2] -= f * ddx;
      (*g)[3] -= f * ddy;
    }
    // box walls on every coordinate
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x[i];
      if (v > p_.l_box) {
        const double s = v - p_.l_box;
        e += p_.k_box * s * s;
        if constexpr (WithGrad) (*g)[i] += 2.0 * p_.k_box * s;
      } else if (v < -p_.l_box) {
        const double s = -v - p_.l_box;
        e += p_.k_box * s * s;
        if constexpr (WithGrad) (*g)[i] -= 2.0 * p_.k_box * s;
      }
    }
    // pair repulsion, dimer pair excluded; distances floored to keep the
    // energy finite (each floor event is counted)
    const double sig2 = p_.sigma * p_.sigma;
    for (int i = 0; i < n_ - 1; ++i) {
      for (int j = i + 1; j < n_; ++j) {
        if (i == 0 && j == 1) continue;
        const double rx = x[2 * i] - x[2 * j], ry = x[2 * i + 1] - x[2 * j + 1];
        double r2 = rx * rx + ry * ry;
        if (r2 < 1e-18) {
          r2 = 1e-18;
          ++singular_;
        }
        const double q2 = sig2 / r2;
        const double q6 = q2 * q2 * q2;
        const double u = p_.eps * q6 * q6;  // (sigma/r)^12
        e += u;
        if constexpr (WithGrad) {
          const double f = -12.0 * u / r2;  // dU/dr * (1/r)
          (*g)[2 * i] += f * rx;
          (*g)[2 * i + 1] += f * ry;
          (*g)[2 * j] -= f * rx;
          (*g)[2 * j + 1] -= f * ry;
        }
      }
    }
    return e;
  }

  Params p_;
  int n_;
  mutable std::atomic<std::uint64_t> singular_{0};
};

}  // namespace bg
