#pragma once

#include <bg/energy/model.hpp>

#include <array>

namespace bg {

// Scaled Mueller potential: sum of four exponential wells,
// E(x, y) = alpha * sum_j A_j exp[a_j dx^2 + b_j dx dy + c_j dy^2]
// with dx = x - xhat_j, dy = y - yhat_j.
class MuellerPotential final : public EnergyModel {
 public:
  explicit MuellerPotential(double alpha = 0.1) : EnergyModel(2), alpha_(alpha) {}

  std::string name() const override { return "mueller"; }

 protected:
  double energy_impl(const Vector& v) const override {
    double e = 0.0;
    for (int j = 0; j < 4; ++j) e += term(j, v[0], v[1]);
    return alpha_ * e;
  }

  double energy_and_gradient_impl(const Vector& v, Vector& g) const override {
    double e = 0.0, gx = 0.0, gy = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double dx = v[0] - xh_[j], dy = v[1] - yh_[j];
      const double t = term(j, v[0], v[1]);
      e += t;
      gx += t * (2.0 * a_[j] * dx + b_[j] * dy);
      gy += t * (b_[j] * dx + 2.0 * c_[j] * dy);
    }
    g[0] = alpha_ * gx;
    g[1] = alpha_ * gy;
    return alpha_ * e;
  }

 private:
  double term(int j, double x, double y) const {
    const double dx = x - xh_[j], dy = y - yh_[j];
    return A_[j] * std::exp(a_[j] * dx * dx + b_[j] * dx * dy + c_[j] * dy * dy);
  }

  double alpha_;
  static constexpr std::array<double, 4> A_{-200.0, -100.0, -170.0, 15.0};
  static constexpr std::array<double, 4> a_{-1.0, -1.0, -6.5, 0.7};
  static constexpr std::array<double, 4> b_{0.0, 0.0, 11.0, 0.6};
  static constexpr std::array<double, 4> c_{-10.0, -10.0, -6.5, 0.7};
  static constexpr std::array<double, 4> xh_{1.0, 0.0, -0.5, -1.0};
  static constexpr std::array<double, 4> yh_{0.0, 0.5, 1.5, 1.0};
};

}  // namespace bg
