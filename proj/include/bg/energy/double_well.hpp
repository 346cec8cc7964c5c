#pragma once

#include <bg/energy/model.hpp>

namespace bg {

// Two-dimensional model system: quartic double well along x, harmonic in y.
// E(x, y) = a/4 x^4 - b/2 x^2 + c x + d/2 y^2.
class DoubleWell final : public EnergyModel {
 public:
  DoubleWell(double a = 1.0, double b = 6.0, double c = 1.0, double d = 1.0)
      : EnergyModel(2), a_(a), b_(b), c_(c), d_(d) {}

  std::string name() const override { return "double_well"; }

  double a() const { return a_; }
  double b() const { return b_; }
  double c() const { return c_; }
  double d() const { return d_; }

  // 1-D marginal part along x (the y factor is Gaussian and separable).
  double energy_x(double x) const {
    return 0.25 * a_ * x * x * x * x - 0.5 * b_ * x * x + c_ * x;
  }

 protected:
  double energy_impl(const Vector& v) const override {
    return energy_x(v[0]) + 0.5 * d_ * v[1] * v[1];
  }

  double energy_and_gradient_impl(const Vector& v, Vector& g) const override {
    const double x = v[0], y = v[1];
    g[0] = a_ * x * x * x - b_ * x + c_;
    g[1] = d_ * y;
    return energy_x(x) + 0.5 * d_ * y * y;
  }

 private:
  double a_, b_, c_, d_;
};

}  // namespace bg
