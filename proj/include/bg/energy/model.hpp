#pragma once

#include <bg/common.hpp>

#include <memory>

namespace bg {

// Dimensionless potential u(x) at reference temperature, with analytic
// gradient. Every evaluation (value, gradient, or fused) counts as one energy
// call; the counter is the cost unit reported in run manifests.
class EnergyModel {
 public:
  explicit EnergyModel(Eigen::Index dim) : dim_(dim) {}
  virtual ~EnergyModel() = default;

  Eigen::Index dim() const { return dim_; }
  virtual std::string name() const = 0;

  double energy(const Vector& x) const {
    require(x.size() == dim_, "energy: dimension mismatch");
    ++calls_;
    return energy_impl(x);
  }

  double energy_and_gradient(const Vector& x, Vector& grad) const {
    require(x.size() == dim_, "energy_and_gradient: dimension mismatch");
    ++calls_;
    grad.setZero(dim_);
    return energy_and_gradient_impl(x, grad);
  }

  Vector energies(const Matrix& x) const {
    Vector u(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) u[r] = energy(x.row(r).transpose());
    return u;
  }

  std::uint64_t energy_calls() const { return calls_.load(); }
  void reset_energy_calls() const { calls_.store(0); }

  // Exchangeable-particle metadata; zero particle_count means the system has
  // no particle structure.
  virtual int particle_count() const { return 0; }
  virtual int particle_dim() const { return 0; }
  // Groups of mutually interchangeable particle indices.
  virtual std::vector<std::vector<int>> identical_groups() const { return {}; }

  // Count of numerically floored pair distances seen so far (repulsive
  // systems only).
  virtual std::uint64_t singularity_events() const { return 0; }

 protected:
  virtual double energy_impl(const Vector& x) const = 0;
  virtual double energy_and_gradient_impl(const Vector& x, Vector& grad) const = 0;

 private:
  Eigen::Index dim_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

using EnergyModelPtr = std::shared_ptr<const EnergyModel>;

}  // namespace bg
