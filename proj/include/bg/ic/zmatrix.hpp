#pragma once

#include <bg/common.hpp>

#include <vector>

namespace bg {

using Vec3 = Eigen::Vector3d;

// One internal-coordinate particle: bond to j, angle through j-k, dihedral
// through j-k-l. Parents must be placed (or Cartesian) before this particle.
struct ZEntry {
  int particle = -1, j = -1, k = -1, l = -1;
};

struct ZMatrixSpec {
  int n_particles = 0;
  std::vector<int> cartesian;
  std::vector<ZEntry> internal;

  void validate() const {
    std::vector<int> seen(n_particles, 0);
    auto mark = [&](int p, const char* what) {
      if (p < 0 || p >= n_particles)
        throw ConfigError(std::string("z-matrix: ") + what + " index out of range");
      if (seen[p]++) throw ConfigError("z-matrix: particle listed twice");
    };
    for (int c : cartesian) mark(c, "cartesian");
    for (const auto& e : internal) {
      for (int p : {e.j, e.k, e.l}) {
        if (p < 0 || p >= n_particles)
          throw ConfigError("z-matrix: parent index out of range");
        if (!seen[p])
          throw ConfigError("z-matrix: parent of particle " +
                            std::to_string(e.particle) + " not yet placed");
      }
      if (e.j == e.k || e.j == e.l || e.k == e.l)
        throw ConfigError("z-matrix: parents of particle " +
                          std::to_string(e.particle) + " must be distinct");
      mark(e.particle, "internal");
    }
    for (int p = 0; p < n_particles; ++p)
      if (!seen[p])
        throw ConfigError("z-matrix: particle " + std::to_string(p) + " not covered");
  }
};

struct InternalCoord {
  double d, alpha, phi;
};

inline Vec3 particle_pos(const Vector& x, int p) { return x.segment<3>(3 * p); }

// Signed dihedral of the chain i-j-k-l: zero when i and l are eclipsed,
// positive for a right-handed twist looking from j towards k.
inline double dihedral_angle(const Vec3& i, const Vec3& j, const Vec3& k, const Vec3& l,
                             int particle_for_error) {
  const Vec3 b1 = j - i, b2 = k - j, b3 = l - k;
  const Vec3 n1 = b1.cross(b2), n2 = b2.cross(b3);
  const double nb2 = b2.norm();
  if (n1.norm() < 1e-12 || n2.norm() < 1e-12 || nb2 < 1e-12)
    throw GeometryError("dihedral undefined for particle " +
                        std::to_string(particle_for_error) + ": collinear parents");
  const Vec3 m1 = n1.cross(b2 / nb2);
  return std::atan2(m1.dot(n2), n1.dot(n2));
}

// (d, alpha, phi) of one particle against its parents.
inline InternalCoord measure_ic(const ZEntry& e, const Vector& x) {
  const Vec3 pi = particle_pos(x, e.particle), pj = particle_pos(x, e.j),
             pk = particle_pos(x, e.k), pl = particle_pos(x, e.l);
  const Vec3 v1 = pi - pj, v2 = pk - pj;
  const double d = v1.norm(), dv2 = v2.norm();
  if (d < 1e-9 || dv2 < 1e-9)
    throw GeometryError("coincident parents measuring particle " +
                        std::to_string(e.particle));
  const double c = std::clamp(v1.dot(v2) / (d * dv2), -1.0, 1.0);
  const double alpha = std::acos(c);
  const double phi = dihedral_angle(pi, pj, pk, pl, e.particle);
  return {d, alpha, phi};
}

// Adjoints of measure_ic: pulls (dbar, abar, pbar) on (d, alpha, phi) back to
// the four particle positions. Same elementary-op bookkeeping as place_ic_vjp.
inline void measure_ic_vjp(const ZEntry& e, const Vector& x, double dbar, double abar,
                           double pbar, Vec3& ibar, Vec3& jbar, Vec3& kbar, Vec3& lbar) {
  const Vec3 pi = particle_pos(x, e.particle), pj = particle_pos(x, e.j),
             pk = particle_pos(x, e.k), pl = particle_pos(x, e.l);
  // bond and angle
  const Vec3 v1 = pi - pj, v2 = pk - pj;
  const double n1v = v1.norm(), n2v = v2.norm();
  const Vec3 u1 = v1 / n1v, u2 = v2 / n2v;
  Vec3 v1bar = dbar * u1;
  Vec3 v2bar = Vec3::Zero();
  const double c = std::clamp(u1.dot(u2), -1.0, 1.0);
  const double s = std::sqrt(std::max(1.0 - c * c, 1e-24));
  const double cbar = -abar / s;  // alpha = acos(c)
  const Vec3 u1bar = cbar * u2, u2bar = cbar * u1;
  v1bar += (u1bar - u1bar.dot(u1) * u1) / n1v;
  v2bar += (u2bar - u2bar.dot(u2) * u2) / n2v;
  ibar += v1bar;
  kbar += v2bar;
  jbar -= v1bar + v2bar;
  // dihedral: phi = atan2(m1.n2, n1.n2)
  const Vec3 b1 = pj - pi, b2 = pk - pj, b3 = pl - pk;
  const Vec3 nn1 = b1.cross(b2), nn2 = b2.cross(b3);
  const double nb2 = b2.norm();
  const Vec3 b2h = b2 / nb2;
  const Vec3 m1 = nn1.cross(b2h);
  const double yy = m1.dot(nn2), xx = nn1.dot(nn2);
  const double r2 = xx * xx + yy * yy;
  const double ybar = pbar * xx / r2, xbar = -pbar * yy / r2;
  Vec3 m1bar = ybar * nn2;
  Vec3 nn2bar = ybar * m1 + xbar * nn1;
  Vec3 nn1bar = xbar * nn2;
  Vec3 b2hbar = Vec3::Zero();
  // m1 = nn1 x b2h
  nn1bar += b2h.cross(m1bar);
  b2hbar += m1bar.cross(nn1);
  Vec3 b2bar = (b2hbar - b2hbar.dot(b2h) * b2h) / nb2;
  // nn1 = b1 x b2, nn2 = b2 x b3
  Vec3 b1bar = b2.cross(nn1bar);
  b2bar += nn1bar.cross(b1);
  b2bar += b3.cross(nn2bar);
  Vec3 b3bar = nn2bar.cross(b2);
  ibar -= b1bar;
  jbar += b1bar - b2bar;
  kbar += b2bar - b3bar;
  lbar += b3bar;
}

// Orthonormal placement frame from the parents; right-handed and consistent
// with measure_ic so place/measure are exact inverses.
struct PlacementFrame {
  Vec3 bc, cr;        // raw j-k and (k-l) x (j-k), kept for the reverse pass
  Vec3 bhat, nhat, mhat;
  bool degenerate = false;
};

inline PlacementFrame placement_frame(const Vec3& pj, const Vec3& pk, const Vec3& pl) {
  PlacementFrame f;
  f.bc = pj - pk;
  f.cr = (pk - pl).cross(f.bc);
  const double nb = f.bc.norm(), nc = f.cr.norm();
  if (nb < 1e-12 || nc < 1e-12) {
    f.degenerate = true;
    return f;
  }
  f.bhat = f.bc / nb;
  f.nhat = f.cr / nc;
  f.mhat = f.nhat.cross(f.bhat);
  return f;
}

inline Vec3 place_ic(const InternalCoord& ic, const Vec3& pj, const Vec3& pk,
                     const Vec3& pl, bool* degenerate = nullptr) {
  const PlacementFrame f = placement_frame(pj, pk, pl);
  if (degenerate) *degenerate = f.degenerate;
  if (f.degenerate) return pj;
  const double sa = std::sin(ic.alpha), ca = std::cos(ic.alpha);
  return pj + ic.d * (-ca * f.bhat + sa * std::cos(ic.phi) * f.mhat -
                      sa * std::sin(ic.phi) * f.nhat);
}

// Adjoints of place_ic. Given dL/d(position of i), accumulates dL/d(d,a,phi)
// and dL/d(parent positions). Mirrors the primal op sequence in reverse;
// normalize pulls back as (g - (g.u)u)/|v| and a x b sends c_bar to
// (b x c_bar, c_bar x a).
inline void place_ic_vjp(const InternalCoord& ic, const Vec3& pj, const Vec3& pk,
                         const Vec3& pl, const Vec3& ibar, double& dbar, double& abar,
                         double& pbar, Vec3& jbar, Vec3& kbar, Vec3& lbar) {
  const PlacementFrame f = placement_frame(pj, pk, pl);
  require(!f.degenerate, "place_ic_vjp: degenerate frame");
  const double sa = std::sin(ic.alpha), ca = std::cos(ic.alpha);
  const double sp = std::sin(ic.phi), cp = std::cos(ic.phi);
  const double c1 = -ic.d * ca, c2 = ic.d * sa * cp, c3 = -ic.d * sa * sp;

  jbar += ibar;  // i = j + w
  const Vec3& wbar = ibar;
  Vec3 bhat_bar = c1 * wbar;
  Vec3 mhat_bar = c2 * wbar;
  Vec3 nhat_bar = c3 * wbar;
  const double c1b = wbar.dot(f.bhat), c2b = wbar.dot(f.mhat), c3b = wbar.dot(f.nhat);
  dbar += -ca * c1b + sa * cp * c2b - sa * sp * c3b;
  abar += ic.d * (sa * c1b + ca * cp * c2b - ca * sp * c3b);
  pbar += ic.d * sa * (-sp * c2b - cp * c3b);

  // mhat = nhat x bhat
  nhat_bar += f.bhat.cross(mhat_bar);
  bhat_bar += mhat_bar.cross(f.nhat);
  // bhat = bc / |bc|, nhat = cr / |cr|
  Vec3 bc_bar = (bhat_bar - bhat_bar.dot(f.bhat) * f.bhat) / f.bc.norm();
  Vec3 cr_bar = (nhat_bar - nhat_bar.dot(f.nhat) * f.nhat) / f.cr.norm();
  // cr = ab x bc with ab = k - l
  const Vec3 ab = pk - pl;
  Vec3 ab_bar = f.bc.cross(cr_bar);
  bc_bar += cr_bar.cross(ab);
  kbar += ab_bar;
  lbar -= ab_bar;
  // bc = j - k
  jbar += bc_bar;
  kbar -= bc_bar;
}

}  // namespace bg
