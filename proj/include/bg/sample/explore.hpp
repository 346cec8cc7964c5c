#pragma once

#include <vector>

#include <bg/energy/model.hpp>
#include <bg/nn/adam.hpp>
#include <bg/train/losses.hpp>

namespace bg {

// Fixed-capacity pool of configurations with cached raw reduced energies.
struct SampleBuffer {
  Matrix x;
  Vector energy;

  long size() const { return x.rows(); }
};

// Fills a buffer by cycling the seed rows with optional Gaussian jitter.
inline SampleBuffer make_buffer(const EnergyModel& model, const Matrix& seeds, long capacity,
                                double noise_std, Rng& rng) {
  require(capacity >= 1, "make_buffer: capacity must be >= 1");
  require(seeds.rows() >= 1, "make_buffer: need at least one seed row");
  require(seeds.cols() == model.dim(), "make_buffer: seed dimension mismatch");
  SampleBuffer buf;
  buf.x.resize(capacity, seeds.cols());
  buf.energy.resize(capacity);
  for (long i = 0; i < capacity; ++i) {
    Vector xi = seeds.row(i % seeds.rows()).transpose();
    if (noise_std > 0.0)
      for (Eigen::Index j = 0; j < xi.size(); ++j) xi[j] += noise_std * rng.normal();
    buf.x.row(i) = xi.transpose();
    buf.energy[i] = model.energy(xi);
  }
  require(buf.energy.allFinite(), "make_buffer: seed configurations must have finite energy");
  return buf;
}

inline SampleBuffer make_buffer(const EnergyModel& model, const Vector& x0, long capacity,
                                double noise_std, Rng& rng) {
  return make_buffer(model, Matrix(x0.transpose()), capacity, noise_std, rng);
}

struct LatentMoveResult {
  long accepted = 0;
  long invalid = 0;  // proposals rejected because the inverse map left the support
  long total = 0;
};

// One Metropolis-Hastings sweep in latent space over the given buffer rows:
// z' = F_xz(x) + step N(0, I), x' = F_zx(z'), accepted with
// min(1, exp(-dE)) where dE = (u(x') - u(x)) / tau - log R_zx(z') - log R_xz(x).
// The two log-determinant terms make the move exact for non-volume-preserving
// flows; at step 0 the proposal is the identity and dE vanishes.
inline LatentMoveResult latent_mh_sweep(const FlowStack& flow, const EnergyModel& model,
                                        SampleBuffer& buffer, const std::vector<long>& rows,
                                        double tau, double step, Rng& rng) {
  LatentMoveResult res;
  res.total = static_cast<long>(rows.size());
  if (rows.empty()) return res;
  Matrix xb(res.total, flow.x_width());
  for (long i = 0; i < res.total; ++i) xb.row(i) = buffer.x.row(rows[static_cast<std::size_t>(i)]);
  const XZEval fwd = flow_forward_xz(flow, xb, false);
  Matrix zp = fwd.z + step * rng.normal_matrix(fwd.z.rows(), fwd.z.cols());
  const ZXEval inv = flow_inverse_zx(flow, zp, false);
  for (long i = 0; i < res.total; ++i) {
    if (!inv.valid[static_cast<std::size_t>(i)]) { ++res.invalid; continue; }
    const Vector xp = inv.x.row(i).transpose();
    const double up = model.energy(xp);
    if (!std::isfinite(up)) { ++res.invalid; continue; }
    const long row = rows[static_cast<std::size_t>(i)];
    const double de = (up - buffer.energy[row]) / tau - inv.logdet[i] - fwd.logdet[i];
    if (de <= 0.0 || rng.uniform() < std::exp(-de)) {
      buffer.x.row(row) = xp.transpose();
      buffer.energy[row] = up;
      ++res.accepted;
    }
  }
  return res;
}

struct ExploreConfig {
  long iterations = 200;
  long batch_size = 1000;
  double lr = 1e-3;
  long init_ml_iterations = 20;    // ML-only warmup before the explore loop
  long init_ml_batch = 128;
  double w_ml = 1.0;
  double w_kl = 1.0;
  double e_high = 1e10;
  double e_max = 1e20;
  double tau = 1.0;
  double step = 0.1;               // initial latent proposal std
  double target_acceptance = 0.3;
  double adapt_factor = 1.02;
  double step_min = 1e-4;
  double step_max = 10.0;
};

struct ExploreRow {
  long iteration = 0;
  double j_ml = 0.0;
  double j_kl = 0.0;
  double step = 0.0;        // proposal std used this iteration
  double acceptance = 0.0;  // invalid proposals count as rejected
  double efficiency = 0.0;  // step * acceptance
};

struct ExploreResult {
  std::vector<ExploreRow> diagnostics;
  long invalid_proposals = 0;
  double final_step = 0.0;
};

// Multiplicative step control: grow when acceptance exceeds the target,
// shrink when below, hold at equality; clamped to [step_min, step_max].
inline double adapt_step(double step, double acceptance, double target,
                         double factor, double step_min, double step_max) {
  if (acceptance > target)
    step = std::min(step_max, step * factor);
  else if (acceptance < target)
    step = std::max(step_min, step / factor);
  return step;
}

// Alternates one training step (maximum likelihood on the buffer plus
// energy-based loss on fresh latent draws) with one latent MH sweep that
// writes accepted proposals back into the buffer. The proposal std adapts
// multiplicatively toward the target acceptance rate and is left unchanged
// when the rate hits the target exactly.
inline ExploreResult latent_explore(FlowStack& flow, const EnergyModel& model,
                                    SampleBuffer& buffer, const ExploreConfig& cfg, Rng& rng) {
  require(cfg.iterations >= 0, "explore: iterations must be >= 0");
  require(cfg.batch_size >= 1 && cfg.batch_size <= buffer.size(),
          "explore: batch_size must be in [1, buffer size]");
  require(cfg.tau > 0.0, "explore: tau must be > 0");
  require(cfg.step > 0.0 && cfg.step_min > 0.0 && cfg.step_max >= cfg.step_min,
          "explore: invalid step bounds");
  require(cfg.adapt_factor > 1.0, "explore: adapt_factor must be > 1");
  require(cfg.target_acceptance > 0.0 && cfg.target_acceptance < 1.0,
          "explore: target_acceptance must be in (0, 1)");
  require(buffer.x.cols() == flow.x_width(), "explore: buffer/flow width mismatch");

  Adam adam(flow.parameter_count(), cfg.lr);
  Vector params = flow.parameters();
  Vector grad(params.size());
  Vector last_finite = params;

  const auto draw_rows = [&](long n) {
    std::vector<long> rows(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = rng.index(buffer.size());
    return rows;
  };
  const auto gather = [&](const std::vector<long>& rows) {
    Matrix xb(static_cast<Eigen::Index>(rows.size()), buffer.x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) xb.row(static_cast<Eigen::Index>(i)) = buffer.x.row(rows[i]);
    return xb;
  };
  const auto check_finite = [&](double value, const char* phase) {
    if (std::isfinite(value) && grad.allFinite()) return;
    flow.set_parameters(last_finite);
    throw StageAbortError(std::string("explore: non-finite loss or gradient during ") + phase,
                          last_finite);
  };

  for (long t = 0; t < cfg.init_ml_iterations; ++t) {
    grad.setZero();
    const MLLossResult ml = ml_loss(flow, gather(draw_rows(cfg.init_ml_batch)), cfg.tau, cfg.w_ml, &grad);
    check_finite(ml.j_ml, "warmup");
    last_finite = params;
    adam.step(params, grad);
    flow.set_parameters(params);
  }

  GeneratedLossOptions gl_opt;
  gl_opt.w_kl = cfg.w_kl;
  gl_opt.e_high = cfg.e_high;
  gl_opt.e_max = cfg.e_max;

  ExploreResult res;
  double step = cfg.step;
  for (long t = 0; t < cfg.iterations; ++t) {
    const std::vector<long> rows = draw_rows(cfg.batch_size);
    grad.setZero();
    const MLLossResult ml = ml_loss(flow, gather(rows), cfg.tau, cfg.w_ml, &grad);
    const Matrix z = std::sqrt(cfg.tau) * rng.normal_matrix(cfg.batch_size, flow.z_width());
    const GeneratedLossResult gl = generated_losses(flow, model, z, cfg.tau, gl_opt, &grad);
    check_finite(cfg.w_ml * ml.j_ml + cfg.w_kl * gl.j_kl, "training");
    last_finite = params;
    adam.step(params, grad);
    flow.set_parameters(params);

    const LatentMoveResult move = latent_mh_sweep(flow, model, buffer, rows, cfg.tau, step, rng);
    res.invalid_proposals += move.invalid;
    const double acc = static_cast<double>(move.accepted) / static_cast<double>(move.total);

    ExploreRow row;
    row.iteration = t;
    row.j_ml = ml.j_ml;
    row.j_kl = gl.j_kl;
    row.step = step;
    row.acceptance = acc;
    row.efficiency = step * acc;
    res.diagnostics.push_back(row);

    step = adapt_step(step, acc, cfg.target_acceptance, cfg.adapt_factor,
                      cfg.step_min, cfg.step_max);
  }
  res.final_step = step;
  return res;
}

}  // namespace bg
