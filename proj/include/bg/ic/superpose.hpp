#pragma once

#include <bg/common.hpp>

#include <Eigen/SVD>

namespace bg {

// Rigid-body removal: least-squares superposition of each frame onto a
// reference structure (Kabsch). Rows are flat (x0,y0,z0,x1,...) position
// vectors of equal particle count.
inline Vector superpose_frame(const Vector& frame, const Vector& ref) {
  require(frame.size() == ref.size() && frame.size() % 3 == 0,
          "superpose_frame: size mismatch");
  const Eigen::Index n = frame.size() / 3;
  using M3 = Eigen::Matrix3d;
  Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> P(frame.data(), 3, n);
  Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> Q(ref.data(), 3, n);
  const Eigen::Vector3d pc = P.rowwise().mean(), qc = Q.rowwise().mean();
  M3 H = M3::Zero();
  for (Eigen::Index i = 0; i < n; ++i) H += (P.col(i) - pc) * (Q.col(i) - qc).transpose();
  Eigen::JacobiSVD<M3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  M3 R = svd.matrixV() * svd.matrixU().transpose();
  if (R.determinant() < 0.0) {
    M3 V = svd.matrixV();
    V.col(2) *= -1.0;
    R = V * svd.matrixU().transpose();
  }
  Vector out(frame.size());
  Eigen::Map<Eigen::Matrix<double, 3, Eigen::Dynamic>> O(out.data(), 3, n);
  for (Eigen::Index i = 0; i < n; ++i) O.col(i) = R * (P.col(i) - pc) + qc;
  return out;
}

inline Matrix superpose_all(const Matrix& frames, const Vector& ref) {
  Matrix out(frames.rows(), frames.cols());
  for (Eigen::Index r = 0; r < frames.rows(); ++r)
    out.row(r) = superpose_frame(frames.row(r).transpose(), ref).transpose();
  return out;
}

}  // namespace bg
