#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Error taxonomy. ConfigError maps to CLI exit code 2, everything else to 3.
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct DegenerateDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EstimatorDegenerateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a training stage cannot continue (NaN loss, all-sample energy
// overflow). Carries the last finite parameter vector so callers can persist it.
struct StageAbortError : std::runtime_error {
  StageAbortError(const std::string& msg, Vector last_finite)
      : std::runtime_error(msg), last_finite_params(std::move(last_finite)) {}
  Vector last_finite_params;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All stochastic code in the library draws through this
// wrapper so that a fixed seed yields a bit-identical stream regardless of
// standard-library distribution internals.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // i in [0, n)
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  // Marsaglia polar method; cached second deviate keeps the stream compact.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * f;
    has_cached_ = true;
    return u * f;
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // B x d matrix of standard normals, row-major fill order.
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_cached_ ? 1 : 0) << ' ';
    os.precision(17);
    os << cached_;
    return os.str();
  }

  void deserialize(const std::string& state) {
    std::istringstream is(state);
    int flag = 0;
    is >> engine_ >> flag >> cached_;
    if (!is) throw ConfigError("invalid RNG state string");
    has_cached_ = (flag != 0);
  }

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// ---------------------------------------------------------------------------
// Small numerics
// ---------------------------------------------------------------------------

inline double log_sum_exp(const Vector& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// Regularized lower incomplete gamma P(a, x); series for x < a+1, continued
// fraction otherwise.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw NumericError("gamma_p: domain");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // Lentz continued fraction for Q(a,x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  const double q = std::exp(-x + a * std::log(x) - gln) * h;
  return 1.0 - q;
}

// Quantile of the chi-squared distribution with d degrees of freedom,
// by bisection on the regularized incomplete gamma.
inline double chi2_quantile(double p, int dof) {
  if (p <= 0.0 || p >= 1.0 || dof < 1) throw NumericError("chi2_quantile: domain");
  const double a = 0.5 * dof;
  double lo = 0.0, hi = 1.0;
  while (gamma_p(a, 0.5 * hi) < p) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_p(a, 0.5 * mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// FNV-1a, used for config hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace bg
