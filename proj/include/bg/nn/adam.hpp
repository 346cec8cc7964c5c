#pragma once

#include <bg/common.hpp>

namespace bg {

// Adam over a flat parameter vector. First step with g=1, lr=1e-3 moves the
// parameter by -lr/(1+eps) because both moment estimates are bias-corrected
// back to g and g^2 exactly.
class Adam {
 public:
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
        m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  void step(Vector& params, const Vector& grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(),
            "Adam::step: size mismatch");
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    params.array() -=
        lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  void reset() {
    t_ = 0;
    m_.setZero();
    v_.setZero();
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long step_count() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Vector m_, v_;
};

}  // namespace bg
