#pragma once

#include <bg/energy/hungarian.hpp>
#include <bg/nn/adam.hpp>
#include <bg/train/losses.hpp>

#include <algorithm>
#include <functional>

namespace bg {

struct TrainingStage {
  int iterations = 100;
  int batch_size = 128;
  double lr = 1e-3;
  double w_ml = 0.0;
  double w_kl = 0.0;
  double w_rc = 0.0;
  double w_torsion = 0.0;
  double e_high = 1e10;
  double e_max = 1e20;
  std::vector<double> temperatures{1.0};  // Gaussian prior variances per batch
};

struct TrainConfig {
  std::vector<TrainingStage> stages;
  double ml_sigma2 = 1.0;  // prior variance matching the data temperature
  RCFunction rc;
  SoftBinEntropy rc_entropy;
  bool relabel_data = true;
  double ema_half_life = 25.0;  // iterations, for the smoothed loss columns

  void validate() const {
    // an empty schedule is legal: training then returns the flow unchanged
    double prev_high = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto& st = stages[s];
      const std::string at = "schedule stage " + std::to_string(s) + ": ";
      if (st.iterations <= 0) throw ConfigError(at + "iterations must be > 0");
      if (st.batch_size < 1) throw ConfigError(at + "batch_size must be >= 1");
      if (!(st.lr > 0.0)) throw ConfigError(at + "lr must be > 0");
      if (st.w_ml < 0 || st.w_kl < 0 || st.w_rc < 0 || st.w_torsion < 0)
        throw ConfigError(at + "loss weights must be >= 0");
      if (st.w_ml + st.w_kl + st.w_rc + st.w_torsion <= 0.0)
        throw ConfigError(at + "at least one loss weight must be positive");
      if (!(st.e_high > 0.0)) throw ConfigError(at + "e_high must be > 0");
      if (st.e_max < st.e_high) throw ConfigError(at + "e_max must be >= e_high");
      if (st.e_high > prev_high)
        throw ConfigError(at + "e_high must be non-increasing across stages");
      prev_high = st.e_high;
      if (st.temperatures.empty())
        throw ConfigError(at + "temperature ladder must be non-empty");
      for (double t : st.temperatures)
        if (!(t > 0.0)) throw ConfigError(at + "temperatures must be > 0");
    }
    if (!(ml_sigma2 > 0.0)) throw ConfigError("schedule: ml_sigma2 must be > 0");
  }
};

struct HistoryRow {
  long iteration = 0;  // global, across stages
  int stage = 0;
  double j_ml, j_kl, j_rc, j_torsion, j_total;
  double ema_j_kl;
  double low_energy_fraction_x, low_energy_fraction_z;
  double valid_fraction;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  long iterations_run = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::string> warnings;
};

// Runs a staged schedule with Adam on the flat parameter vector. Adam moments
// survive stage boundaries unless the learning rate changes. A non-finite
// total loss aborts the stage and restores the last finite parameters.
inline TrainResult run_schedule(
    FlowStack& flow, const EnergyModel& model, const Matrix& data,
    const TrainConfig& cfg, Rng& rng,
    const std::function<void(const HistoryRow&)>& on_iteration = nullptr) {
  cfg.validate();
  if (cfg.stages.empty()) return {};
  bool any_ml = false, any_gen = false;
  for (const auto& st : cfg.stages) {
    any_ml |= st.w_ml > 0.0;
    any_gen |= st.w_kl > 0.0 || st.w_rc > 0.0 || st.w_torsion > 0.0;
  }
  if (any_ml && data.rows() == 0)
    throw ConfigError("schedule: likelihood stages require training data");

  Matrix train_data = data;
  if (cfg.relabel_data && data.rows() > 0 && model.particle_count() > 0) {
    const auto groups = model.identical_groups();
    if (!groups.empty()) {
      const Vector ref = data.row(0).transpose();
      for (Eigen::Index r = 0; r < train_data.rows(); ++r)
        train_data.row(r) =
            relabel_particles(train_data.row(r).transpose(), ref, groups,
                              model.particle_dim())
                .transpose();
    }
  }

  // diagnostic thresholds: 99th percentile of data energies, and the
  // latent-side 99% bound of |z|^2/2 (chi-squared with d_z degrees of freedom)
  double x_threshold = std::numeric_limits<double>::quiet_NaN();
  if (train_data.rows() > 0 && any_gen) {
    Vector u = model.energies(train_data);
    std::sort(u.data(), u.data() + u.size());
    const Eigen::Index q =
        std::min<Eigen::Index>(u.size() - 1,
                               static_cast<Eigen::Index>(0.99 * static_cast<double>(u.size())));
    x_threshold = u[q];
  }
  const double z_threshold =
      0.5 * chi2_quantile(0.99, static_cast<int>(flow.z_width()));

  Vector params = flow.parameters();
  Vector last_finite = params;
  Adam adam(params.size(), cfg.stages.front().lr);
  double prev_lr = cfg.stages.front().lr;

  TrainResult result;
  const double ema_decay = std::pow(0.5, 1.0 / cfg.ema_half_life);
  double ema_kl = std::numeric_limits<double>::quiet_NaN();
  long global_iter = 0;

  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const auto& st = cfg.stages[s];
    if (st.lr != prev_lr) {
      adam.reset();
      adam.set_learning_rate(st.lr);
      prev_lr = st.lr;
    }
    for (int it = 0; it < st.iterations; ++it, ++global_iter) {
      Vector grad = Vector::Zero(params.size());
      HistoryRow row;
      row.iteration = global_iter;
      row.stage = static_cast<int>(s);
      row.j_ml = row.j_kl = row.j_rc = row.j_torsion =
          std::numeric_limits<double>::quiet_NaN();
      row.low_energy_fraction_x = row.low_energy_fraction_z =
          std::numeric_limits<double>::quiet_NaN();
      row.valid_fraction = 1.0;

      if (st.w_ml > 0.0) {
        Matrix xb(st.batch_size, train_data.cols());
        for (int b = 0; b < st.batch_size; ++b)
          xb.row(b) = train_data.row(static_cast<Eigen::Index>(rng.index(
              static_cast<std::size_t>(train_data.rows()))));
        const MLLossResult ml =
            ml_loss(flow, xb, cfg.ml_sigma2, st.w_ml, &grad, z_threshold);
        row.j_ml = ml.j_ml;
        row.low_energy_fraction_z = ml.low_z_fraction;
      }

      if (st.w_kl > 0.0 || st.w_rc > 0.0 || st.w_torsion > 0.0) {
        GeneratedLossOptions opt;
        opt.w_kl = st.w_kl;
        opt.w_rc = st.w_rc;
        opt.w_torsion = st.w_torsion;
        opt.e_high = st.e_high;
        opt.e_max = st.e_max;
        opt.rc = st.w_rc > 0.0 ? &cfg.rc : nullptr;
        opt.rc_entropy = cfg.rc_entropy;
        opt.x_energy_threshold = x_threshold;
        double sum_kl = 0.0, sum_rc = 0.0, sum_tor = 0.0, sum_low = 0.0, sum_valid = 0.0;
        int n_low = 0;
        for (double tau : st.temperatures) {
          const Matrix z =
              std::sqrt(tau) * rng.normal_matrix(st.batch_size, flow.z_width());
          const GeneratedLossResult gl =
              generated_losses(flow, model, z, tau, opt, &grad);
          if (st.w_kl > 0.0 && gl.n_valid > 0 && gl.n_capped == gl.n_valid) {
            flow.set_parameters(last_finite);
            throw StageAbortError(
                "energy loss: every generated sample exceeded the regularization "
                "ceiling at iteration " + std::to_string(global_iter) +
                "; increase e_high",
                last_finite);
          }
          if (gl.rc_out_of_bounds && result.warnings.empty())
            result.warnings.push_back(
                "rc loss: entire batch outside [rc_min, rc_max] at iteration " +
                std::to_string(global_iter) + "; density evaluated on clamped bins");
          sum_kl += gl.j_kl;
          if (!std::isnan(gl.j_rc)) sum_rc += gl.j_rc;
          if (!std::isnan(gl.j_torsion)) sum_tor += gl.j_torsion;
          if (!std::isnan(gl.low_energy_fraction)) {
            sum_low += gl.low_energy_fraction;
            ++n_low;
          }
          sum_valid += static_cast<double>(gl.n_valid) / st.batch_size;
        }
        row.j_kl = sum_kl;
        if (st.w_rc > 0.0) row.j_rc = sum_rc;
        if (st.w_torsion > 0.0) row.j_torsion = sum_tor;
        if (n_low > 0) row.low_energy_fraction_x = sum_low / n_low;
        row.valid_fraction = sum_valid / static_cast<double>(st.temperatures.size());
      }

      double total = 0.0;
      if (!std::isnan(row.j_ml)) total += st.w_ml * row.j_ml;
      if (!std::isnan(row.j_kl)) total += st.w_kl * row.j_kl;
      if (!std::isnan(row.j_rc)) total += st.w_rc * row.j_rc;
      if (!std::isnan(row.j_torsion)) total += st.w_torsion * row.j_torsion;
      row.j_total = total;

      if (!std::isfinite(total) || !grad.allFinite()) {
        flow.set_parameters(last_finite);
        result.aborted = true;
        result.abort_reason = "non-finite loss at iteration " +
                              std::to_string(global_iter) +
                              "; parameters restored to last finite state";
        throw StageAbortError(result.abort_reason, last_finite);
      }
      last_finite = params;

      if (!std::isnan(row.j_kl)) {
        ema_kl = std::isnan(ema_kl) ? row.j_kl
                                    : ema_decay * ema_kl + (1.0 - ema_decay) * row.j_kl;
      }
      row.ema_j_kl = ema_kl;

      adam.step(params, grad);
      flow.set_parameters(params);

      result.history.push_back(row);
      ++result.iterations_run;
      if (on_iteration) on_iteration(row);
    }
  }
  return result;
}

}  // namespace bg
