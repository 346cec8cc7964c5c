#pragma once

#include <bg/common.hpp>

#include <Eigen/Eigenvalues>

namespace bg {

// Fixed linear layer fitted by PCA on a data matrix: z = L^{-1/2} R^T (x - mu),
// x = R L^{1/2} z + mu. R holds the principal directions column-wise sorted by
// descending eigenvalue; directions with eigenvalue below tol * lambda_max plus
// the trailing discard_null directions are dropped, so the z side can be
// narrower than the x side.
struct WhiteningLayer {
  Vector mean;      // d
  Matrix basis;     // d x keep
  Vector lambda;    // keep, descending
  double sum_log_lambda = 0.0;

  Eigen::Index x_width() const { return mean.size(); }
  Eigen::Index z_width() const { return lambda.size(); }

  // Per-sample log |det dz/dx|, constant across the batch.
  double logdet_xz() const { return -0.5 * sum_log_lambda; }
  double logdet_zx() const { return 0.5 * sum_log_lambda; }

  Matrix forward(const Matrix& x) const {
    return (x.rowwise() - mean.transpose()) * basis *
           lambda.cwiseSqrt().cwiseInverse().asDiagonal();
  }

  Matrix inverse(const Matrix& z) const {
    return (z * lambda.cwiseSqrt().asDiagonal() * basis.transpose()).rowwise() +
           mean.transpose();
  }

  // dL/dx from dL/dz (x -> z direction).
  Matrix backward_forward(const Matrix& dz) const {
    return dz * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * basis.transpose();
  }

  // dL/dz from dL/dx (z -> x direction).
  Matrix backward_inverse(const Matrix& dx) const {
    return dx * basis * lambda.cwiseSqrt().asDiagonal();
  }
};

inline WhiteningLayer fit_whitening(const Matrix& data, int discard_null = 0,
                                    double null_tol = 1e-10) {
  if (data.rows() < 2) throw DegenerateDataError("fit_whitening: need at least 2 samples");
  const Eigen::Index d = data.cols();
  if (discard_null < 0 || discard_null >= d)
    throw ConfigError("fit_whitening: discard_null out of range");

  WhiteningLayer w;
  w.mean = data.colwise().mean().transpose();
  Matrix centered = data.rowwise() - w.mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success)
    throw NumericError("fit_whitening: eigendecomposition failed");
  // Eigen returns ascending order; flip to descending.
  Vector evals = es.eigenvalues().reverse();
  Matrix evecs = es.eigenvectors().rowwise().reverse();

  const Eigen::Index keep = d - discard_null;
  const double lambda_max = evals[0];
  if (lambda_max <= 0.0)
    throw DegenerateDataError("fit_whitening: covariance has no positive eigenvalue");
  for (Eigen::Index i = 0; i < keep; ++i) {
    if (evals[i] < null_tol * lambda_max)
      throw DegenerateDataError(
          "fit_whitening: near-null eigendirection inside the kept subspace; "
          "increase discard_null");
  }
  w.basis = evecs.leftCols(keep);
  w.lambda = evals.head(keep);
  w.sum_log_lambda = w.lambda.array().log().sum();
  return w;
}

}  // namespace bg
