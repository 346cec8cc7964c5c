#pragma once

#include <bg/common.hpp>

#include <vector>

namespace bg {

// Minimum-cost assignment on a square cost matrix in O(n^3) via the potential
// (shortest augmenting path) formulation. Returns row -> column.
inline std::vector<int> hungarian_assignment(const Matrix& cost) {
  require(cost.rows() == cost.cols(), "hungarian: square matrix required");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);  // p[col] = row matched to col
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Permutes interchangeable particles of one configuration so that each group
// matches the reference labeling at minimum total squared distance. pdim is
// the number of coordinates per particle; groups hold particle indices.
inline Vector relabel_particles(const Vector& x, const Vector& ref,
                                const std::vector<std::vector<int>>& groups, int pdim) {
  require(x.size() == ref.size() && pdim > 0, "relabel_particles: size mismatch");
  Vector out = x;
  for (const auto& group : groups) {
    const int m = static_cast<int>(group.size());
    if (m < 2) continue;
    Matrix cost(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        cost(a, b) = (x.segment(pdim * group[a], pdim) -
                      ref.segment(pdim * group[b], pdim))
                         .squaredNorm();
    const std::vector<int> assign = hungarian_assignment(cost);
    for (int a = 0; a < m; ++a)
      out.segment(pdim * group[assign[a]], pdim) = x.segment(pdim * group[a], pdim);
  }
  return out;
}

}  // namespace bg
