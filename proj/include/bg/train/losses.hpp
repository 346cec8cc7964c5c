#pragma once

#include <bg/energy/model.hpp>
#include <bg/energy/prior.hpp>
#include <bg/energy/regularize.hpp>
#include <bg/flow/stack.hpp>
#include <bg/train/rc.hpp>

namespace bg {

struct GeneratedLossOptions {
  double w_kl = 1.0;
  double w_rc = 0.0;
  double w_torsion = 0.0;
  double e_high = 1e10;
  double e_max = 1e20;
  const RCFunction* rc = nullptr;
  SoftBinEntropy rc_entropy;
  // raw-energy threshold for the low-energy diagnostic (NaN disables it)
  double x_energy_threshold = std::numeric_limits<double>::quiet_NaN();
};

struct GeneratedLossResult {
  double j_kl = std::numeric_limits<double>::quiet_NaN();
  double j_rc = std::numeric_limits<double>::quiet_NaN();
  double j_torsion = std::numeric_limits<double>::quiet_NaN();
  double mean_raw_energy = std::numeric_limits<double>::quiet_NaN();
  double low_energy_fraction = std::numeric_limits<double>::quiet_NaN();
  Eigen::Index n_valid = 0;
  Eigen::Index n_capped = 0;        // valid samples with scaled energy >= e_max
  bool rc_out_of_bounds = false;    // every RC value fell outside [lo, hi]
  Matrix x;                  // generated batch
  std::vector<char> valid;
};

// Losses on one generated batch z ~ N(0, tau I): energy loss
// J_KL = mean[E_reg(u(x)/tau) - log R_zx], the RC negative-entropy loss, and
// the out-of-range dihedral penalty sum(max(0, |phi| - pi)^2). If grad is
// non-null, d(w_kl J_KL + w_rc J_RC + w_tor J_tor)/d(theta) is accumulated.
// Estimator code must not reuse these capped energies.
inline GeneratedLossResult generated_losses(const FlowStack& flow,
                                            const EnergyModel& model, const Matrix& z,
                                            double tau, const GeneratedLossOptions& opt,
                                            Vector* grad) {
  GeneratedLossResult res;
  const Eigen::Index B = z.rows();
  ZXEval ev = flow_inverse_zx(flow, z, grad != nullptr);
  res.x = ev.x;
  res.valid = ev.valid;
  for (char v : ev.valid) res.n_valid += (v != 0);

  Matrix dx = Matrix::Zero(B, ev.x.cols());
  Vector d_logdet = Vector::Zero(B);
  const double inv_n =
      res.n_valid > 0 ? 1.0 / static_cast<double>(res.n_valid) : 0.0;

  // energy loss over valid samples
  if (res.n_valid > 0) {
    double acc = 0.0, acc_raw = 0.0;
    Eigen::Index n_low = 0;
    Vector g(ev.x.cols());
    for (Eigen::Index i = 0; i < B; ++i) {
      if (!ev.valid[static_cast<std::size_t>(i)]) continue;
      double u_raw;
      const bool need_grad = grad && opt.w_kl != 0.0;
      if (need_grad) {
        u_raw = model.energy_and_gradient(ev.x.row(i).transpose(), g);
      } else {
        u_raw = model.energy(ev.x.row(i).transpose());
      }
      const double scaled = u_raw / tau;
      if (scaled >= opt.e_max) ++res.n_capped;
      acc += regularize_energy(scaled, opt.e_high, opt.e_max) - ev.logdet[i];
      acc_raw += u_raw;
      if (!std::isnan(opt.x_energy_threshold) && u_raw <= opt.x_energy_threshold)
        ++n_low;
      if (need_grad) {
        const double f = opt.w_kl * inv_n *
                         regularize_energy_derivative(scaled, opt.e_high, opt.e_max) /
                         tau;
        dx.row(i) += f * g.transpose();
        d_logdet[i] = -opt.w_kl * inv_n;
      }
    }
    res.j_kl = acc * inv_n;
    res.mean_raw_energy = acc_raw * inv_n;
    if (!std::isnan(opt.x_energy_threshold))
      res.low_energy_fraction = static_cast<double>(n_low) * inv_n;
  }

  // RC loss over valid samples
  if (opt.rc && res.n_valid > 0) {
    Vector r(res.n_valid);
    std::vector<Eigen::Index> rows;
    rows.reserve(static_cast<std::size_t>(res.n_valid));
    for (Eigen::Index i = 0; i < B; ++i)
      if (ev.valid[static_cast<std::size_t>(i)]) {
        r[static_cast<Eigen::Index>(rows.size())] = opt.rc->value(ev.x.row(i).transpose());
        rows.push_back(i);
      }
    res.rc_out_of_bounds =
        !(r.array() >= opt.rc_entropy.lo && r.array() <= opt.rc_entropy.hi).any();
    Vector dr;
    res.j_rc = opt.rc_entropy.evaluate(r, grad ? &dr : nullptr);
    if (grad && opt.w_rc != 0.0) {
      for (std::size_t k = 0; k < rows.size(); ++k) {
        Vector xb = Vector::Zero(ev.x.cols());
        opt.rc->add_gradient(ev.x.row(rows[k]).transpose(),
                             opt.w_rc * dr[static_cast<Eigen::Index>(k)], xb);
        dx.row(rows[k]) += xb.transpose();
      }
    }
  }

  // dihedral range penalty on all batch rows (it exists to pull invalid
  // samples back into range)
  const MixedLayer* mixed =
      flow.layers.empty() ? nullptr : std::get_if<MixedLayer>(&flow.layers.front());
  Matrix inject;
  if (mixed && ev.mixed_result.has_value()) {
    const Matrix& raw = ev.mixed_result->raw_ic;
    const Eigen::Index m = static_cast<Eigen::Index>(mixed->spec.internal.size());
    const Eigen::Index wcols = mixed->whitening.z_width();
    if (grad) inject = Matrix::Zero(B, mixed->z_width());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
      for (Eigen::Index e = 0; e < m; ++e) {
        const double phi = raw(i, 3 * e + 2);
        const double over = std::abs(phi) - M_PI;
        if (over > 0.0) {
          acc += over * over;
          if (grad) {
            const double dphi = 2.0 * over * (phi > 0.0 ? 1.0 : -1.0);
            inject(i, wcols + 3 * e + 2) +=
                opt.w_torsion * dphi * mixed->ic_std[3 * e + 2] / static_cast<double>(B);
          }
        }
      }
    }
    res.j_torsion = acc / static_cast<double>(B);
  }

  if (grad) {
    flow_backward_zx(flow, ev, dx, d_logdet, *grad,
                     (mixed && opt.w_torsion != 0.0 && inject.size() > 0) ? &inject
                                                                          : nullptr);
  }
  return res;
}

struct MLLossResult {
  double j_ml = std::numeric_limits<double>::quiet_NaN();
  double low_z_fraction = std::numeric_limits<double>::quiet_NaN();
  Matrix z;
};

// Likelihood loss on a data batch: J_ML = mean[|F_xz(x)|^2 / (2 sigma2)
// - log R_xz]. z_threshold (if finite) is the latent-side energy bound for
// the low-energy diagnostic.
inline MLLossResult ml_loss(const FlowStack& flow, const Matrix& x, double sigma2,
                            double weight, Vector* grad,
                            double z_threshold = std::numeric_limits<double>::quiet_NaN()) {
  MLLossResult res;
  const Eigen::Index B = x.rows();
  require(B > 0, "ml_loss: empty batch");
  XZEval ev = flow_forward_xz(flow, x, grad != nullptr);
  for (Eigen::Index i = 0; i < B; ++i)
    if (!ev.z.row(i).allFinite())
      throw NumericError("ml_loss: non-finite latent image at sample " + std::to_string(i));
  const Vector z2 = ev.z.rowwise().squaredNorm();
  res.j_ml = (0.5 * z2.array() / sigma2 - ev.logdet.array()).mean();
  res.z = ev.z;
  if (!std::isnan(z_threshold))
    res.low_z_fraction =
        (0.5 * z2.array() <= z_threshold).cast<double>().mean();
  if (grad) {
    const double f = weight / (sigma2 * static_cast<double>(B));
    const Matrix dz = f * ev.z;
    const Vector dld =
        Vector::Constant(B, -weight / static_cast<double>(B));
    flow_backward_xz(flow, ev, dz, dld, *grad);
  }
  return res;
}

}  // namespace bg
