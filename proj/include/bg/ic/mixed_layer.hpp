#pragma once

#include <bg/flow/whitening.hpp>
#include <bg/ic/zmatrix.hpp>

#include <vector>

namespace bg {

// Coordinate layer for molecules: a Cartesian particle subset is PCA-whitened,
// every other particle is described by (bond, angle, dihedral) against three
// parents, each normalized by data mean/std. The z side is
// [whitened block | normalized IC triplets in placement order].
struct MixedLayer {
  ZMatrixSpec spec;
  WhiteningLayer whitening;
  Vector ic_mean, ic_std;  // 3 * |internal|
  double sum_log_ic_std = 0.0;

  Eigen::Index x_width() const { return 3 * spec.n_particles; }
  Eigen::Index z_width() const {
    return whitening.z_width() + 3 * static_cast<Eigen::Index>(spec.internal.size());
  }
};

namespace detail {

inline std::vector<Eigen::Index> cartesian_columns(const ZMatrixSpec& spec) {
  std::vector<Eigen::Index> cols;
  cols.reserve(3 * spec.cartesian.size());
  for (int p : spec.cartesian)
    for (int k = 0; k < 3; ++k) cols.push_back(3 * p + k);
  return cols;
}

}  // namespace detail

// Raw (unnormalized) ICs of every internal particle, one row per frame.
inline Matrix measure_all_ic(const ZMatrixSpec& spec, const Matrix& x) {
  const Eigen::Index m = static_cast<Eigen::Index>(spec.internal.size());
  Matrix ic(x.rows(), 3 * m);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Vector row = x.row(r).transpose();
    for (Eigen::Index e = 0; e < m; ++e) {
      const InternalCoord c = measure_ic(spec.internal[e], row);
      ic(r, 3 * e) = c.d;
      ic(r, 3 * e + 1) = c.alpha;
      ic(r, 3 * e + 2) = c.phi;
    }
  }
  return ic;
}

inline MixedLayer fit_mixed_layer(ZMatrixSpec spec, const Matrix& data,
                                  int discard_null = 0) {
  spec.validate();
  if (data.cols() != 3 * spec.n_particles)
    throw ConfigError("fit_mixed_layer: data width does not match particle count");
  if (data.rows() < 2) throw DegenerateDataError("fit_mixed_layer: need >= 2 frames");
  if (spec.cartesian.empty())
    throw ConfigError("fit_mixed_layer: need a Cartesian anchor set");

  MixedLayer layer;
  layer.spec = std::move(spec);
  const auto cart_cols = detail::cartesian_columns(layer.spec);
  Matrix cart(data.rows(), static_cast<Eigen::Index>(cart_cols.size()));
  for (std::size_t j = 0; j < cart_cols.size(); ++j) cart.col(j) = data.col(cart_cols[j]);
  layer.whitening = fit_whitening(cart, discard_null);

  const Matrix ic = measure_all_ic(layer.spec, data);
  layer.ic_mean = ic.colwise().mean().transpose();
  Matrix centered = ic.rowwise() - layer.ic_mean.transpose();
  layer.ic_std = (centered.array().square().colwise().sum() /
                  static_cast<double>(data.rows() - 1))
                     .sqrt()
                     .transpose()
                     .matrix();
  for (Eigen::Index i = 0; i < layer.ic_std.size(); ++i)
    if (!(layer.ic_std[i] > 1e-12))
      throw DegenerateDataError("fit_mixed_layer: IC column " + std::to_string(i) +
                                " has vanishing variance");
  layer.sum_log_ic_std = layer.ic_std.array().log().sum();
  return layer;
}

// x -> z. Throws GeometryError on degenerate input geometry (data side).
inline Matrix mixed_forward(const MixedLayer& layer, const Matrix& x, Vector& logdet) {
  require(x.cols() == layer.x_width(), "mixed_forward: width mismatch");
  const auto cart_cols = detail::cartesian_columns(layer.spec);
  Matrix cart(x.rows(), static_cast<Eigen::Index>(cart_cols.size()));
  for (std::size_t j = 0; j < cart_cols.size(); ++j) cart.col(j) = x.col(cart_cols[j]);
  const Matrix white = layer.whitening.forward(cart);

  const Matrix ic = measure_all_ic(layer.spec, x);
  const Eigen::Index m = static_cast<Eigen::Index>(layer.spec.internal.size());
  Matrix z(x.rows(), layer.z_width());
  z.leftCols(white.cols()) = white;
  z.rightCols(3 * m) =
      (ic.rowwise() - layer.ic_mean.transpose()) * layer.ic_std.cwiseInverse().asDiagonal();

  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double ld = layer.whitening.logdet_xz() - layer.sum_log_ic_std;
    for (Eigen::Index e = 0; e < m; ++e) {
      const double d = ic(r, 3 * e), alpha = ic(r, 3 * e + 1);
      // measurement block determinant is 1 / (d^2 sin(alpha))
      ld -= 2.0 * std::log(d) + std::log(std::max(std::sin(alpha), 1e-300));
    }
    logdet[r] += ld;
  }
  return z;
}

struct MixedInverseResult {
  Matrix x;        // B x 3n placed positions
  Matrix raw_ic;   // B x 3m denormalized ICs (trace for the reverse pass)
  std::vector<char> valid;
};

// z -> x. Generated-sample side: geometry problems mark the sample invalid
// instead of throwing. valid requires |phi| <= pi, a nondegenerate placement
// frame for every particle, and a z -> x -> z remeasure within 1e-8.
inline MixedInverseResult mixed_inverse(const MixedLayer& layer, const Matrix& z,
                                        Vector& logdet) {
  require(z.cols() == layer.z_width(), "mixed_inverse: width mismatch");
  const Eigen::Index B = z.rows();
  const Eigen::Index m = static_cast<Eigen::Index>(layer.spec.internal.size());
  const Eigen::Index wcols = layer.whitening.z_width();

  MixedInverseResult res;
  res.x = Matrix::Zero(B, layer.x_width());
  res.raw_ic =
      (z.rightCols(3 * m) * layer.ic_std.asDiagonal()).rowwise() + layer.ic_mean.transpose();
  res.valid.assign(static_cast<std::size_t>(B), 1);

  const Matrix cart = layer.whitening.inverse(z.leftCols(wcols));
  const auto cart_cols = detail::cartesian_columns(layer.spec);
  for (std::size_t j = 0; j < cart_cols.size(); ++j) res.x.col(cart_cols[j]) = cart.col(j);

  for (Eigen::Index r = 0; r < B; ++r) {
    Vector pos = res.x.row(r).transpose();
    double ld = layer.whitening.logdet_zx() + layer.sum_log_ic_std;
    bool ok = true;
    for (Eigen::Index e = 0; e < m; ++e) {
      const auto& ent = layer.spec.internal[e];
      InternalCoord ic{res.raw_ic(r, 3 * e), res.raw_ic(r, 3 * e + 1),
                       res.raw_ic(r, 3 * e + 2)};
      if (!(ic.d > 1e-9) || std::abs(ic.phi) > M_PI || !(std::sin(ic.alpha) > 1e-12))
        ok = false;
      bool degen = false;
      const Vec3 p =
          place_ic(ic, particle_pos(pos, ent.j), particle_pos(pos, ent.k),
                   particle_pos(pos, ent.l), &degen);
      if (degen) ok = false;
      pos.segment<3>(3 * ent.particle) = p;
      ld += 2.0 * std::log(std::max(ic.d, 1e-9)) +
            std::log(std::max(std::sin(ic.alpha), 1e-300));
    }
    res.x.row(r) = pos.transpose();
    if (ok) {
      // invertibility check: remeasure and compare on the raw IC scale
      for (Eigen::Index e = 0; e < m && ok; ++e) {
        try {
          const InternalCoord c = measure_ic(layer.spec.internal[e], pos);
          const double dd = std::abs(c.d - res.raw_ic(r, 3 * e));
          const double da = std::abs(c.alpha - res.raw_ic(r, 3 * e + 1));
          double dp = std::abs(c.phi - res.raw_ic(r, 3 * e + 2));
          dp = std::min(dp, std::abs(dp - 2.0 * M_PI));  // pi and -pi coincide
          if (dd > 1e-8 || da > 1e-8 || dp > 1e-8) ok = false;
        } catch (const GeometryError&) {
          ok = false;
        }
      }
    }
    res.valid[static_cast<std::size_t>(r)] = ok ? 1 : 0;
    logdet[r] += ld;
  }
  return res;
}

// Reverse-mode through mixed_inverse. d_x is dL/d(positions), d_logdet the
// adjoint of the accumulated z -> x log-Jacobian. Invalid rows yield zero.
// The log-det contributes 2/d to the bond adjoint and cot(alpha) to the angle
// adjoint; everything else walks the placement chain backwards.
inline Matrix mixed_backward_inverse(const MixedLayer& layer,
                                     const MixedInverseResult& res, const Matrix& d_x,
                                     const Vector& d_logdet) {
  const Eigen::Index B = d_x.rows();
  const Eigen::Index m = static_cast<Eigen::Index>(layer.spec.internal.size());
  const Eigen::Index wcols = layer.whitening.z_width();
  Matrix dz = Matrix::Zero(B, layer.z_width());
  const auto cart_cols = detail::cartesian_columns(layer.spec);

  for (Eigen::Index r = 0; r < B; ++r) {
    if (!res.valid[static_cast<std::size_t>(r)]) continue;
    const Vector pos = res.x.row(r).transpose();
    Matrix pbar = Matrix::Zero(3, layer.spec.n_particles);
    for (Eigen::Index p = 0; p < layer.spec.n_particles; ++p)
      pbar.col(p) = d_x.row(r).segment<3>(3 * p).transpose();

    const double gR = d_logdet[r];
    for (Eigen::Index e = m; e-- > 0;) {
      const auto& ent = layer.spec.internal[e];
      const InternalCoord ic{res.raw_ic(r, 3 * e), res.raw_ic(r, 3 * e + 1),
                             res.raw_ic(r, 3 * e + 2)};
      const Vec3 ibar = pbar.col(ent.particle);
      double dbar = gR * 2.0 / ic.d;
      double abar = gR * std::cos(ic.alpha) / std::sin(ic.alpha);
      double phbar = 0.0;
      Vec3 jbar = Vec3::Zero(), kbar = Vec3::Zero(), lbar = Vec3::Zero();
      place_ic_vjp(ic, particle_pos(pos, ent.j), particle_pos(pos, ent.k),
                   particle_pos(pos, ent.l), ibar, dbar, abar, phbar, jbar, kbar, lbar);
      pbar.col(ent.j) += jbar;
      pbar.col(ent.k) += kbar;
      pbar.col(ent.l) += lbar;
      pbar.col(ent.particle).setZero();
      dz(r, wcols + 3 * e) = dbar * layer.ic_std[3 * e];
      dz(r, wcols + 3 * e + 1) = abar * layer.ic_std[3 * e + 1];
      dz(r, wcols + 3 * e + 2) = phbar * layer.ic_std[3 * e + 2];
    }
    Matrix cart_bar(1, static_cast<Eigen::Index>(cart_cols.size()));
    for (std::size_t j = 0; j < cart_cols.size(); ++j) {
      const Eigen::Index col = cart_cols[j];
      cart_bar(0, static_cast<Eigen::Index>(j)) = pbar(col % 3, col / 3);
    }
    dz.row(r).head(wcols) = layer.whitening.backward_inverse(cart_bar).row(0);
  }
  return dz;
}

}  // namespace bg
