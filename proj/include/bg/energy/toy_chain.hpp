#pragma once

#include <bg/energy/model.hpp>
#include <bg/ic/zmatrix.hpp>

namespace bg {

// Linear bead chain in 3-D with harmonic bonds and angles plus a cosine
// torsion potential with two inequivalent rotamer wells per dihedral. Small
// enough to train in seconds yet exercises the full mixed-coordinate layer.
class ToyChain final : public EnergyModel {
 public:
  struct Params {
    int n_beads = 6;
    double k_bond = 50.0;
    double d0 = 1.0;
    double k_angle = 10.0;
    double alpha0 = 1.9;
    double k_tor1 = 0.3;  // weight of (1 + cos phi)
    double k_tor3 = 1.5;  // weight of (1 + cos 3 phi)
  };

  ToyChain() : ToyChain(Params{}) {}
  explicit ToyChain(Params p) : EnergyModel(3 * p.n_beads), p_(p) {
    if (p.n_beads < 4) throw ConfigError("toy_chain: need at least 4 beads");
  }

  std::string name() const override { return "toy_chain"; }
  const Params& params() const { return p_; }

  int particle_count() const override { return p_.n_beads; }
  int particle_dim() const override { return 3; }

  // Natural coordinate description: first three beads Cartesian, every later
  // bead placed against its three predecessors.
  ZMatrixSpec zmatrix() const {
    ZMatrixSpec spec;
    spec.n_particles = p_.n_beads;
    spec.cartesian = {0, 1, 2};
    for (int i = 3; i < p_.n_beads; ++i) spec.internal.push_back({i, i - 1, i - 2, i - 3});
    return spec;
  }

  // Straight-chain reference geometry, slightly kinked so angles and
  // dihedrals are well-defined.
  Vector reference_configuration() const {
    Vector x(dim());
    for (int i = 0; i < p_.n_beads; ++i) {
      const double t = p_.alpha0 - M_PI / 2.0;
      x[3 * i] = p_.d0 * std::cos(t * i) * i;
      x[3 * i + 1] = p_.d0 * ((i % 2 == 0) ? 0.3 : -0.3);
      x[3 * i + 2] = 0.1 * i * i;
    }
    return x;
  }

  double torsion_energy(double phi) const {
    return p_.k_tor1 * (1.0 + std::cos(phi)) + p_.k_tor3 * (1.0 + std::cos(3.0 * phi));
  }

 protected:
  double energy_impl(const Vector& x) const override {
    double e = 0.0;
    const int n = p_.n_beads;
    for (int i = 1; i < n; ++i) {
      const double d = (particle_pos(x, i) - particle_pos(x, i - 1)).norm();
      e += 0.5 * p_.k_bond * (d - p_.d0) * (d - p_.d0);
    }
    for (int i = 2; i < n; ++i) {
      const double a = bead_angle(x, i);
      e += 0.5 * p_.k_angle * (a - p_.alpha0) * (a - p_.alpha0);
    }
    for (int i = 3; i < n; ++i) {
      const double phi = dihedral_angle(particle_pos(x, i), particle_pos(x, i - 1),
                                        particle_pos(x, i - 2), particle_pos(x, i - 3), i);
      e += torsion_energy(phi);
    }
    return e;
  }

  double energy_and_gradient_impl(const Vector& x, Vector& g) const override {
    double e = 0.0;
    const int n = p_.n_beads;
    for (int i = 1; i < n; ++i) {
      const Vec3 v = particle_pos(x, i) - particle_pos(x, i - 1);
      const double d = std::max(v.norm(), 1e-12);
      const double f = p_.k_bond * (d - p_.d0) / d;
      e += 0.5 * p_.k_bond * (d - p_.d0) * (d - p_.d0);
      g.segment<3>(3 * i) += f * v;
      g.segment<3>(3 * (i - 1)) -= f * v;
    }
    for (int i = 2; i < n; ++i) {
      const Vec3 pi = particle_pos(x, i), pj = particle_pos(x, i - 1),
                 pk = particle_pos(x, i - 2);
      const Vec3 v1 = pi - pj, v2 = pk - pj;
      const double n1 = std::max(v1.norm(), 1e-12), n2 = std::max(v2.norm(), 1e-12);
      const Vec3 u1 = v1 / n1, u2 = v2 / n2;
      const double c = std::clamp(u1.dot(u2), -1.0, 1.0);
      const double s = std::max(std::sqrt(1.0 - c * c), 1e-12);
      const double a = std::acos(c);
      const double de = p_.k_angle * (a - p_.alpha0);
      e += 0.5 * p_.k_angle * (a - p_.alpha0) * (a - p_.alpha0);
      const Vec3 dai = (c * u1 - u2) / (n1 * s);
      const Vec3 dak = (c * u2 - u1) / (n2 * s);
      g.segment<3>(3 * i) += de * dai;
      g.segment<3>(3 * (i - 2)) += de * dak;
      g.segment<3>(3 * (i - 1)) -= de * (dai + dak);
    }
    for (int i = 3; i < n; ++i) {
      const double phi = dihedral_angle(particle_pos(x, i), particle_pos(x, i - 1),
                                        particle_pos(x, i - 2), particle_pos(x, i - 3), i);
      e += torsion_energy(phi);
      const double dphi =
          -p_.k_tor1 * std::sin(phi) - 3.0 * p_.k_tor3 * std::sin(3.0 * phi);
      Vec3 bi = Vec3::Zero(), bj = Vec3::Zero(), bk = Vec3::Zero(), bl = Vec3::Zero();
      const ZEntry ent{i, i - 1, i - 2, i - 3};
      measure_ic_vjp(ent, x, 0.0, 0.0, dphi, bi, bj, bk, bl);
      g.segment<3>(3 * i) += bi;
      g.segment<3>(3 * (i - 1)) += bj;
      g.segment<3>(3 * (i - 2)) += bk;
      g.segment<3>(3 * (i - 3)) += bl;
    }
    return e;
  }

 private:
  double bead_angle(const Vector& x, int i) const {
    const Vec3 v1 = particle_pos(x, i) - particle_pos(x, i - 1);
    const Vec3 v2 = particle_pos(x, i - 2) - particle_pos(x, i - 1);
    const double c =
        std::clamp(v1.dot(v2) / std::max(v1.norm() * v2.norm(), 1e-24), -1.0, 1.0);
    return std::acos(c);
  }

  Params p_;
};

}  // namespace bg
