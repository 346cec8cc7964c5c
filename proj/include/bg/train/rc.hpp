#pragma once

#include <bg/common.hpp>

namespace bg {

// Scalar reaction coordinate r(x): a single coordinate, a linear projection,
// or the distance between two particles (pdim consecutive coordinates each).
struct RCFunction {
  enum class Kind { Coordinate, Projection, PairDistance };
  Kind kind = Kind::Coordinate;
  int index = 0;       // Coordinate
  Vector w;            // Projection
  int pi = 0, pj = 1;  // PairDistance
  int pdim = 2;

  double value(const Vector& x) const {
    switch (kind) {
      case Kind::Coordinate:
        return x[index];
      case Kind::Projection:
        return w.dot(x);
      case Kind::PairDistance:
        return (x.segment(pdim * pi, pdim) - x.segment(pdim * pj, pdim)).norm();
    }
    return 0.0;
  }

  // Adds rbar * dr/dx into xbar.
  void add_gradient(const Vector& x, double rbar, Vector& xbar) const {
    switch (kind) {
      case Kind::Coordinate:
        xbar[index] += rbar;
        return;
      case Kind::Projection:
        xbar += rbar * w;
        return;
      case Kind::PairDistance: {
        const Vector v = x.segment(pdim * pi, pdim) - x.segment(pdim * pj, pdim);
        const double d = std::max(v.norm(), 1e-12);
        xbar.segment(pdim * pi, pdim) += (rbar / d) * v;
        xbar.segment(pdim * pj, pdim) -= (rbar / d) * v;
        return;
      }
    }
  }
};

// Batch negative entropy of r under a soft-binned kernel density estimate on
// [lo, hi]: J = sum_k p_k log(p_k / bin_width), with p_k the softmax-weighted
// bin masses averaged over the batch. Uniform samples give -log(hi - lo).
struct SoftBinEntropy {
  double lo = 0.0, hi = 1.0;
  int bins = 64;

  // values: batch r values. If dvalues is non-null it receives dJ/dr_i.
  double evaluate(const Vector& values, Vector* dvalues) const {
    require(hi > lo && bins >= 2, "SoftBinEntropy: bad bounds");
    const Eigen::Index B = values.size();
    if (B == 0) return 0.0;
    const double width = (hi - lo) / bins;
    const double h2 = width * width;  // kernel bandwidth = bin width
    Vector centers(bins);
    for (int k = 0; k < bins; ++k) centers[k] = lo + (k + 0.5) * width;

    Matrix gamma(B, bins);  // soft assignment, rows sum to 1
    Matrix dlogit(B, bins);
    for (Eigen::Index i = 0; i < B; ++i) {
      Vector logits(bins);
      for (int k = 0; k < bins; ++k) {
        const double d = values[i] - centers[k];
        logits[k] = -0.5 * d * d / h2;
        dlogit(i, k) = -d / h2;
      }
      const double m = logits.maxCoeff();
      Vector e = (logits.array() - m).exp();
      gamma.row(i) = (e / e.sum()).transpose();
    }
    Vector p = gamma.colwise().mean().transpose();
    double J = 0.0;
    Vector a(bins);
    for (int k = 0; k < bins; ++k) {
      const double pk = std::max(p[k], 1e-300);
      J += pk * std::log(pk / width);
      a[k] = std::log(pk / width) + 1.0;
    }
    if (dvalues) {
      dvalues->setZero(B);
      for (Eigen::Index i = 0; i < B; ++i) {
        const double mix = gamma.row(i).dot(dlogit.row(i));
        double g = 0.0;
        for (int k = 0; k < bins; ++k)
          g += a[k] * gamma(i, k) * (dlogit(i, k) - mix);
        (*dvalues)[i] = g / static_cast<double>(B);
      }
    }
    return J;
  }
};

}  // namespace bg
