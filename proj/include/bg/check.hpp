#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/LU>

#include <bg/energy/double_well.hpp>
#include <bg/energy/hungarian.hpp>
#include <bg/energy/regularize.hpp>
#include <bg/energy/toy_chain.hpp>
#include <bg/estimate/reweight.hpp>
#include <bg/flow/stack.hpp>
#include <bg/train/losses.hpp>

namespace bg {

// ---------------------------------------------------------------------------
// Numeric oracles (shared by the check command and the test suite)
// ---------------------------------------------------------------------------

inline double log_abs_det(const Matrix& j) {
  Eigen::PartialPivLU<Matrix> lu(j);
  return lu.matrixLU().diagonal().array().abs().log().sum();
}

// Central-difference Jacobian of the x -> z map at one point.
inline Matrix numeric_jacobian_xz(const FlowStack& flow, const Vector& x, double h = 1e-5) {
  const Eigen::Index d = x.size();
  Matrix jac(flow.z_width(), d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Matrix xp(1, d), xm(1, d);
    xp.row(0) = x.transpose();
    xm.row(0) = x.transpose();
    xp(0, j) += h;
    xm(0, j) -= h;
    jac.col(j) = (flow_forward_xz(flow, xp, false).z.row(0) -
                  flow_forward_xz(flow, xm, false).z.row(0)).transpose() / (2.0 * h);
  }
  return jac;
}

inline Matrix numeric_jacobian_zx(const FlowStack& flow, const Vector& z, double h = 1e-5) {
  const Eigen::Index d = z.size();
  Matrix jac(flow.x_width(), d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Matrix zp(1, d), zm(1, d);
    zp.row(0) = z.transpose();
    zm.row(0) = z.transpose();
    zp(0, j) += h;
    zm(0, j) -= h;
    const ZXEval evp = flow_inverse_zx(flow, zp, false);
    const ZXEval evm = flow_inverse_zx(flow, zm, false);
    require(evp.valid[0] && evm.valid[0], "numeric_jacobian_zx: point left the support");
    jac.col(j) = (evp.x.row(0) - evm.x.row(0)).transpose() / (2.0 * h);
  }
  return jac;
}

// Central-difference gradient of a scalar function of the flow parameters.
template <class Loss>
inline Vector fd_parameter_gradient(FlowStack& flow, Loss&& loss, double h = 1e-5) {
  const Vector p0 = flow.parameters();
  Vector g(p0.size());
  Vector p = p0;
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    p[i] = p0[i] + h;
    flow.set_parameters(p);
    const double lp = loss();
    p[i] = p0[i] - h;
    flow.set_parameters(p);
    const double lm = loss();
    p[i] = p0[i];
    g[i] = (lp - lm) / (2.0 * h);
  }
  flow.set_parameters(p0);
  return g;
}

// ---------------------------------------------------------------------------
// Property battery
// ---------------------------------------------------------------------------

struct CheckOptions {
  std::uint64_t seed = 20240915;
  // Fault-injection hook: added to every reported forward log-determinant in
  // the numeric-Jacobian comparison. Any nonzero value must turn that check red.
  double logdet_perturbation = 0.0;
};

struct CheckItem {
  std::string name;
  double value = 0.0;      // measured discrepancy
  double tolerance = 0.0;  // pinned acceptance threshold
  bool pass = false;
};

inline bool all_pass(const std::vector<CheckItem>& items) {
  return std::all_of(items.begin(), items.end(), [](const CheckItem& c) { return c.pass; });
}

namespace detail {

inline CheckItem check_item(const std::string& name, double value, double tol) {
  return {name, value, tol, value <= tol};
}

// Gaussian with the exact mean/covariance a whitening layer encodes.
class GaussianTarget final : public EnergyModel {
 public:
  GaussianTarget(const Vector& mean, const Matrix& precision)
      : EnergyModel(mean.size()), mean_(mean), precision_(precision) {}

  std::string name() const override { return "gaussian_target"; }

 protected:
  double energy_impl(const Vector& x) const override {
    const Vector d = x - mean_;
    return 0.5 * d.dot(precision_ * d);
  }
  double energy_and_gradient_impl(const Vector& x, Vector& grad) const override {
    const Vector d = x - mean_;
    grad = precision_ * d;
    return 0.5 * d.dot(precision_ * d);
  }

 private:
  Vector mean_;
  Matrix precision_;
};

inline FlowStack small_random_flow(const std::string& architecture, Eigen::Index dim,
                                   const Matrix* data, double param_scale, Rng& rng) {
  FlowConfig cfg;
  cfg.architecture = architecture;
  cfg.hidden_layers = 1;
  cfg.hidden_width = 8;
  cfg.scale_cap = 3.0;
  FlowStack f = build_flow(cfg, dim, data, rng);
  f.set_parameters(param_scale * rng.normal_vector(f.parameter_count()));
  return f;
}

inline Matrix jittered_chain_frames(const ToyChain& chain, Eigen::Index n, double jitter,
                                    Rng& rng) {
  const Vector ref = chain.reference_configuration();
  Matrix frames(n, ref.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    frames.row(i) = ref.transpose();
    for (Eigen::Index j = 0; j < ref.size(); ++j) frames(i, j) += jitter * rng.normal();
  }
  return frames;
}

}  // namespace detail

inline std::vector<CheckItem> run_property_battery(const CheckOptions& opt = {}) {
  using detail::check_item;
  std::vector<CheckItem> items;
  Rng rng(opt.seed);

  // Flows under test: plain couplings (width 2), whitening + couplings
  // (width 4), wider couplings (width 6).
  std::vector<FlowStack> flows;
  flows.push_back(detail::small_random_flow("R4", 2, nullptr, 0.3, rng));
  {
    Matrix data = rng.normal_matrix(256, 4);
    data.col(2) *= 2.5;
    data.rowwise() += Eigen::RowVector4d(0.3, -1.0, 0.2, 0.0);
    flows.push_back(detail::small_random_flow("W R2", 4, &data, 0.3, rng));
  }
  flows.push_back(detail::small_random_flow("R2", 6, nullptr, 0.3, rng));

  double rt = 0.0, ld = 0.0, rec = 0.0;
  for (const FlowStack& f : flows) {
    const Matrix x = rng.normal_matrix(8, f.x_width());
    const XZEval fwd = flow_forward_xz(f, x, false);
    const ZXEval inv = flow_inverse_zx(f, fwd.z, false);
    rt = std::max(rt, (inv.x - x).cwiseAbs().maxCoeff());
    rec = std::max(rec, (fwd.logdet + inv.logdet).cwiseAbs().maxCoeff());
    const Vector x0 = x.row(0).transpose();
    const double numeric = log_abs_det(numeric_jacobian_xz(f, x0));
    ld = std::max(ld, std::abs(numeric - (fwd.logdet[0] + opt.logdet_perturbation)));
  }
  items.push_back(check_item("flow_roundtrip_xzx", rt, 1e-8));
  items.push_back(check_item("flow_logdet_vs_numeric", ld, 1e-5));
  items.push_back(check_item("flow_logdet_reciprocal", rec, 1e-8));

  // Internal-coordinate roundtrip: measure after place recovers (d, alpha, phi).
  {
    double worst = 0.0;
    const ZEntry entry{3, 2, 1, 0};
    for (int t = 0; t < 50; ++t) {
      Vector x(12);
      for (int k = 0; k < 9; ++k) x[k] = rng.uniform(-1.0, 1.0);
      Vec3 pj = x.segment<3>(6), pk = x.segment<3>(3), pl = x.segment<3>(0);
      if ((pj - pk).norm() < 0.3 || ((pk - pl).cross(pj - pk)).norm() < 0.1) { --t; continue; }
      InternalCoord ic{rng.uniform(0.5, 2.0), rng.uniform(0.2, M_PI - 0.2),
                       rng.uniform(-M_PI + 0.05, M_PI - 0.05)};
      bool degenerate = false;
      x.segment<3>(9) = place_ic(ic, pj, pk, pl, &degenerate);
      require(!degenerate, "ic roundtrip: degenerate frame in test data");
      const InternalCoord back = measure_ic(entry, x);
      double dphi = std::abs(back.phi - ic.phi);
      dphi = std::min(dphi, 2.0 * M_PI - dphi);
      worst = std::max({worst, std::abs(back.d - ic.d), std::abs(back.alpha - ic.alpha), dphi});
    }
    items.push_back(check_item("ic_roundtrip", worst, 1e-8));
  }

  // Mixed coordinate layer: full-width roundtrip, log-determinant in both
  // directions against numeric Jacobians, exact reciprocity.
  {
    ToyChain chain;
    const Matrix frames = detail::jittered_chain_frames(chain, 64, 0.03, rng);
    FlowConfig cfg;
    cfg.architecture = "M R1";
    cfg.hidden_layers = 1;
    cfg.hidden_width = 8;
    cfg.zmatrix = chain.zmatrix();
    FlowStack f = build_flow(cfg, frames.cols(), &frames, rng);
    f.set_parameters(0.05 * rng.normal_vector(f.parameter_count()));

    const Matrix x = frames.topRows(6);
    const XZEval fwd = flow_forward_xz(f, x, false);
    const ZXEval inv = flow_inverse_zx(f, fwd.z, false);
    double valid_ok = 1.0;
    for (char v : inv.valid) valid_ok = std::min(valid_ok, static_cast<double>(v));
    require(valid_ok > 0.0, "mixed roundtrip: unexpectedly invalid row");
    items.push_back(check_item("mixed_roundtrip_xzx",
                               (inv.x - x).cwiseAbs().maxCoeff(), 1e-8));
    items.push_back(check_item("mixed_logdet_reciprocal",
                               (fwd.logdet + inv.logdet).cwiseAbs().maxCoeff(), 1e-8));

    const Vector x0 = x.row(0).transpose();
    const double num_xz = log_abs_det(numeric_jacobian_xz(f, x0));
    items.push_back(check_item("mixed_logdet_xz_vs_numeric",
                               std::abs(num_xz - fwd.logdet[0]), 1e-5));
    const Vector z0 = fwd.z.row(0).transpose();
    const double num_zx = log_abs_det(numeric_jacobian_zx(f, z0));
    items.push_back(check_item("mixed_logdet_zx_vs_numeric",
                               std::abs(num_zx - inv.logdet[0]), 1e-5));
  }

  // Loss gradients against central differences, 2-D system.
  {
    DoubleWell dw;
    FlowStack f = detail::small_random_flow("R2", 2, nullptr, 0.2, rng);
    const Matrix z = rng.normal_matrix(16, 2);
    Matrix xdata = rng.normal_matrix(16, 2);
    xdata.col(0).array() -= 1.5;
    GeneratedLossOptions gopt;
    gopt.w_kl = 1.0;
    gopt.w_rc = 0.3;
    gopt.e_high = 5.0;
    RCFunction rc;
    rc.kind = RCFunction::Kind::Coordinate;
    rc.index = 0;
    gopt.rc = &rc;
    gopt.rc_entropy.lo = -4.0;
    gopt.rc_entropy.hi = 4.0;
    gopt.rc_entropy.bins = 16;
    const double tau = 1.0, w_ml = 0.4;

    Vector grad = Vector::Zero(f.parameter_count());
    const GeneratedLossResult gl = generated_losses(f, dw, z, tau, gopt, &grad);
    const MLLossResult ml = ml_loss(f, xdata, 1.0, w_ml, &grad);
    (void)gl;
    (void)ml;
    const Vector fd = fd_parameter_gradient(f, [&]() {
      const GeneratedLossResult g2 = generated_losses(f, dw, z, tau, gopt, nullptr);
      const MLLossResult m2 = ml_loss(f, xdata, 1.0, w_ml, nullptr);
      return gopt.w_kl * g2.j_kl + gopt.w_rc * g2.j_rc + w_ml * m2.j_ml;
    });
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    items.push_back(check_item("gradient_vs_fd_2d",
                               (fd - grad).cwiseAbs().maxCoeff() / scale, 1e-4));
  }

  // Loss gradients against central differences through the mixed layer,
  // including the flat-bottomed dihedral penalty on out-of-range rows.
  {
    ToyChain chain;
    const Matrix frames = detail::jittered_chain_frames(chain, 48, 0.03, rng);
    FlowConfig cfg;
    cfg.architecture = "M R1";
    cfg.hidden_layers = 1;
    cfg.hidden_width = 6;
    cfg.zmatrix = chain.zmatrix();
    FlowStack f = build_flow(cfg, frames.cols(), &frames, rng);
    f.set_parameters(0.02 * rng.normal_vector(f.parameter_count()));

    const Matrix xdata = frames.topRows(12);
    Matrix z = flow_forward_xz(f, xdata, false).z;
    // Push four rows' last dihedral far outside (-pi, pi] so the penalty and
    // the invalid-row paths both carry gradient, stably under FD steps.
    const MixedLayer& mixed = std::get<MixedLayer>(f.layers.front());
    const Eigen::Index wcols = mixed.whitening.z_width();
    const Eigen::Index slot = wcols + 3 * 2 + 2;
    for (int r = 0; r < 4; ++r)
      z(r, slot) = (M_PI + 0.5 - mixed.ic_mean[3 * 2 + 2]) / mixed.ic_std[3 * 2 + 2];

    GeneratedLossOptions gopt;
    gopt.w_kl = 1.0;
    gopt.w_torsion = 0.5;
    gopt.e_high = 1e10;
    const double tau = 1.0, w_ml = 0.3;

    Vector grad = Vector::Zero(f.parameter_count());
    generated_losses(f, chain, z, tau, gopt, &grad);
    ml_loss(f, xdata, 1.0, w_ml, &grad);
    const Vector fd = fd_parameter_gradient(f, [&]() {
      const GeneratedLossResult g2 = generated_losses(f, chain, z, tau, gopt, nullptr);
      const MLLossResult m2 = ml_loss(f, xdata, 1.0, w_ml, nullptr);
      return gopt.w_kl * g2.j_kl + gopt.w_torsion * g2.j_torsion + w_ml * m2.j_ml;
    });
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    items.push_back(check_item("gradient_vs_fd_chain",
                               (fd - grad).cwiseAbs().maxCoeff() / scale, 1e-4));
  }

  // Hungarian assignment equals exhaustive search for n <= 7.
  {
    double worst = 0.0;
    for (int n = 1; n <= 7; ++n)
      for (int trial = 0; trial < 5; ++trial) {
        Matrix cost(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = rng.uniform();
        const std::vector<int> assign = hungarian_assignment(cost);
        double got = 0.0;
        for (int i = 0; i < n; ++i) got += cost(i, assign[static_cast<std::size_t>(i)]);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
          double c = 0.0;
          for (int i = 0; i < n; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
          best = std::min(best, c);
        } while (std::next_permutation(perm.begin(), perm.end()));
        worst = std::max(worst, std::abs(got - best));
      }
    items.push_back(check_item("hungarian_vs_exhaustive", worst, 1e-12));
  }

  // Reweighting on an exactly Gaussian flow: flat weights, exact expectations.
  {
    Matrix data = rng.normal_matrix(512, 4);
    data.col(1) *= 1.8;
    data.col(3) *= 0.6;
    data.rowwise() += Eigen::RowVector4d(1.0, 0.0, -0.5, 2.0);
    FlowStack f;
    f.layers.emplace_back(fit_whitening(data));
    const WhiteningLayer& w = std::get<WhiteningLayer>(f.layers.front());
    const Matrix precision =
        w.basis * w.lambda.cwiseInverse().asDiagonal() * w.basis.transpose();
    detail::GaussianTarget target(w.mean, precision);

    const WeightedSamples ws = generate_weighted(f, target, 400, 1.0, rng);
    const Vector lw = ws.valid_log_weights();
    items.push_back(check_item("reweight_gaussian_flat_logw",
                               lw.maxCoeff() - lw.minCoeff(), 1e-8));
    items.push_back(check_item(
        "reweight_gaussian_neff",
        std::abs(effective_sample_size(lw) - static_cast<double>(lw.size())), 1e-6));
    const Matrix xv = ws.valid_x();
    const Vector obs = xv.col(0).array().square().matrix();
    items.push_back(check_item(
        "reweight_gaussian_expectation",
        std::abs(weighted_expectation(lw, obs) - obs.mean()), 1e-8));
  }

  // Energy cap: exact below the cap, continuous across it, constant above the
  // ceiling.
  {
    const double e_high = 10.0, e_max = 1e20;
    double worst = std::abs(regularize_energy(e_high, e_high, e_max) - e_high);
    worst = std::max(worst, std::abs(regularize_energy(e_high + 1e-10, e_high, e_max) -
                                     regularize_energy(e_high - 1e-10, e_high, e_max)));
    worst = std::max(worst, std::abs(regularize_energy(3.7, e_high, e_max) - 3.7));
    worst = std::max(worst,
                     std::abs(regularize_energy(2e20, e_high, e_max) -
                              regularize_energy(e_max, e_high, e_max)));
    items.push_back(check_item("energy_cap_continuity", worst, 1e-9));
  }

  return items;
}

}  // namespace bg
