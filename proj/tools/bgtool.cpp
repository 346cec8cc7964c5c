// Command-line driver: config-driven training, sampling, free-energy
// estimation, latent exploration, Monte Carlo baselines, and the invariant
// battery. Exit codes: 0 ok, 2 config error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <bg/check.hpp>
#include <bg/estimate/delta_a.hpp>
#include <bg/io/checkpoint.hpp>
#include <bg/io/config.hpp>
#include <bg/io/csv.hpp>
#include <bg/io/manifest.hpp>
#include <bg/sample/explore.hpp>
#include <bg/sample/metropolis.hpp>
#include <bg/sample/umbrella.hpp>
#include <bg/train/trainer.hpp>

namespace fs = std::filesystem;
using namespace bg;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

int report_config_errors(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "config error: " << e << "\n";
  return 2;
}

// Consumes the top-level keys every config may carry, regardless of command.
void consume_shared_sections(JsonView& root) {
  root.object("system");
  root.object("flow");
  root.object("train");
  root.object("sample");
  root.object("estimate");
  root.object("explore");
  root.object("baseline");
}

struct RunContext {
  json cfg;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string hash;
};

RunContext begin_run(const CommonFlags& flags, JsonView& root) {
  RunContext ctx;
  ctx.seed = flags.seed.value_or(static_cast<std::uint64_t>(root.integer("seed", 0)));
  ctx.out_dir = flags.out.value_or(root.str("out", "out"));
  if (root.integer("schema_version", 1) != 1) root.error("'schema_version' must be 1");
  return ctx;
}

void write_samples_csv(const std::string& path, const WeightedSamples& ws) {
  std::vector<std::string> cols;
  for (Eigen::Index j = 0; j < ws.x.cols(); ++j) cols.push_back("x" + std::to_string(j));
  cols.push_back("log_weight");
  cols.push_back("tau");
  cols.push_back("valid");
  CsvWriter w(path, cols);
  const Vector lw = ws.valid_log_weights();
  w.comment("n_eff = " + format_double(effective_sample_size(lw)));
  w.comment("n_valid = " + std::to_string(ws.n_valid()));
  w.comment("n_discarded = " + std::to_string(ws.n_discarded));
  std::vector<double> row(cols.size());
  for (Eigen::Index i = 0; i < ws.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < ws.x.cols(); ++j) row[static_cast<std::size_t>(j)] = ws.x(i, j);
    row[cols.size() - 3] = ws.log_weight[i];
    row[cols.size() - 2] = ws.tau;
    row[cols.size() - 1] = ws.valid[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    w.row(row);
  }
}

void write_profile_rows(CsvWriter& w, double tau, const FreeEnergyProfile& p) {
  for (Eigen::Index b = 0; b < p.centers.size(); ++b)
    w.row({tau, p.centers[b], p.free_energy[b], p.mass[b],
           p.masked[static_cast<std::size_t>(b)] ? 1.0 : 0.0});
}

std::vector<double> trained_ladder(const json& checkpoint) {
  if (!checkpoint.contains("trained_temperatures")) return {};
  return checkpoint.at("trained_temperatures").get<std::vector<double>>();
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const CommonFlags& flags) {
  json cfg = load_config_file(flags.config_path);
  std::vector<std::string> errors;
  JsonView root(&cfg, "config", &errors);
  RunContext ctx = begin_run(flags, root);
  SystemInfo sys = make_system(root.object("system"));
  FlowConfig fcfg = make_flow_config(root.object("flow"), sys.zmatrix);
  std::string data_path;
  TrainConfig tcfg = make_train_config(root.object("train"), &data_path);
  consume_shared_sections(root);
  root.finish();

  bool needs_data = fcfg.architecture.find('W') != std::string::npos ||
                    fcfg.architecture.find('M') != std::string::npos;
  for (const auto& st : tcfg.stages) needs_data |= st.w_ml > 0.0;
  if (needs_data) {
    if (data_path.empty())
      errors.push_back(
          "config.train: 'data' is required (coordinate layers or likelihood "
          "stages present)");
    else if (!fs::exists(data_path))
      errors.push_back("config.train: data file not found: " + data_path);
  }
  if (!errors.empty()) return report_config_errors(errors);

  fs::create_directories(ctx.out_dir);
  WallClock clock;
  sys.model->reset_energy_calls();
  Rng rng(ctx.seed);

  Matrix data;
  if (!data_path.empty() && needs_data) {
    data = read_matrix_csv(data_path);
    if (data.cols() != sys.model->dim())
      throw ConfigError("training data has " + std::to_string(data.cols()) +
                        " columns, system needs " + std::to_string(sys.model->dim()));
  }
  FlowStack flow = build_flow(fcfg, sys.model->dim(), data.rows() > 0 ? &data : nullptr, rng);

  CsvWriter hist(ctx.out_dir + "/history.csv",
                 {"iter", "stage", "J_ML", "J_KL", "J_RC", "J_torsion", "J_total",
                  "ema_J_KL", "low_energy_fraction_x", "low_energy_fraction_z",
                  "valid_fraction"});
  RunManifest man;
  man.command = "train";
  man.config_hash = config_hash(cfg);
  man.seed = ctx.seed;

  int exit_code = 0;
  try {
    TrainResult res = run_schedule(flow, *sys.model, data, tcfg, rng,
                                   [&](const HistoryRow& r) {
                                     hist.row({static_cast<double>(r.iteration),
                                               static_cast<double>(r.stage), r.j_ml,
                                               r.j_kl, r.j_rc, r.j_torsion, r.j_total,
                                               r.ema_j_kl, r.low_energy_fraction_x,
                                               r.low_energy_fraction_z,
                                               r.valid_fraction});
                                   });
    man.warnings = res.warnings;
    std::cout << "trained " << res.iterations_run << " iterations over "
              << tcfg.stages.size() << " stages\n";
  } catch (const StageAbortError& e) {
    man.warnings.push_back(std::string("stage abort: ") + e.what());
    std::cerr << "stage abort: " << e.what() << "\n";
    exit_code = 3;
  }
  hist.flush();

  json ck = json_from_flow(flow);
  std::vector<double> ladder;
  for (const auto& st : tcfg.stages)
    ladder.insert(ladder.end(), st.temperatures.begin(), st.temperatures.end());
  std::sort(ladder.begin(), ladder.end());
  ladder.erase(std::unique(ladder.begin(), ladder.end()), ladder.end());
  ck["trained_temperatures"] = ladder;
  ck["rng"] = rng.serialize();
  {
    std::ofstream out(ctx.out_dir + "/checkpoint.json");
    if (!out) throw ConfigError("cannot open for writing: " + ctx.out_dir + "/checkpoint.json");
    out << ck.dump(1) << "\n";
  }

  man.energy_calls = sys.model->energy_calls();
  man.singularity_events = sys.model->singularity_events();
  man.wall_seconds = clock.seconds();
  write_manifest(ctx.out_dir + "/manifest.json", man);
  std::cout << "outputs in " << ctx.out_dir << " (history.csv, checkpoint.json, manifest.json)\n";
  return exit_code;
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

int cmd_sample(const CommonFlags& flags, const std::optional<std::string>& ck_flag,
               std::optional<long> n_flag, std::optional<double> tau_flag) {
  json cfg = load_config_file(flags.config_path);
  std::vector<std::string> errors;
  JsonView root(&cfg, "config", &errors);
  RunContext ctx = begin_run(flags, root);
  SystemInfo sys = make_system(root.object("system"));
  JsonView sv = root.object("sample");
  std::string ck_path = ck_flag.value_or(sv.str("checkpoint", ""));
  const long n = n_flag.value_or(sv.integer("n", 10000));
  const double tau = tau_flag.value_or(sv.number("tau", 1.0));
  sv.finish();
  consume_shared_sections(root);
  root.finish();
  if (ck_path.empty()) errors.push_back("config.sample: 'checkpoint' is required");
  if (n < 1) errors.push_back("config.sample: 'n' must be >= 1");
  if (!(tau > 0.0)) errors.push_back("config.sample: 'tau' must be > 0");
  if (!errors.empty()) return report_config_errors(errors);

  fs::create_directories(ctx.out_dir);
  WallClock clock;
  sys.model->reset_energy_calls();
  Rng rng(ctx.seed);

  const json ck = load_config_file(ck_path);
  const FlowStack flow = flow_from_json(ck);
  if (flow.x_width() != sys.model->dim())
    throw ConfigError("checkpoint width does not match the configured system");

  RunManifest man;
  man.command = "sample";
  man.config_hash = config_hash(cfg);
  man.seed = ctx.seed;
  const std::vector<double> ladder = trained_ladder(ck);
  if (!ladder.empty() &&
      (tau < 0.5 * ladder.front() || tau > 2.0 * ladder.back())) {
    man.warnings.push_back("tau = " + format_double(tau) +
                           " is far outside the trained ladder [" +
                           format_double(ladder.front()) + ", " +
                           format_double(ladder.back()) + "]");
  }

  const WeightedSamples ws = generate_weighted(flow, *sys.model, n, tau, rng);
  write_samples_csv(ctx.out_dir + "/samples.csv", ws);
  const double n_eff = effective_sample_size(ws.valid_log_weights());
  std::cout << "n = " << n << ", n_valid = " << ws.n_valid() << ", n_eff = " << n_eff
            << "\n";

  man.energy_calls = sys.model->energy_calls();
  man.singularity_events = sys.model->singularity_events();
  man.wall_seconds = clock.seconds();
  write_manifest(ctx.out_dir + "/manifest.json", man);
  std::cout << "outputs in " << ctx.out_dir << " (samples.csv, manifest.json)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// free-energy
// ---------------------------------------------------------------------------

struct ProfileRequest {
  bool enabled = false;
  RCFunction rc;
  int bins = 64;
  double lo = 0.0, hi = 1.0;
  double min_mass = 0.01;
};

int cmd_free_energy(const CommonFlags& flags) {
  json cfg = load_config_file(flags.config_path);
  std::vector<std::string> errors;
  JsonView root(&cfg, "config", &errors);
  RunContext ctx = begin_run(flags, root);
  SystemInfo sys = make_system(root.object("system"));
  JsonView ev = root.object("estimate");
  const std::string ck_single = ev.str("checkpoint", "");
  const std::string ck_a = ev.str("checkpoint_a", "");
  const std::string ck_b = ev.str("checkpoint_b", "");
  const std::string samples_path = ev.str("samples", "");
  const long n = ev.integer("n", 10000);
  const int resamples = static_cast<int>(ev.integer("resamples", 200));
  std::vector<double> taus = ev.numbers("taus", {1.0});

  ProfileRequest prof;
  if (ev.has("profile")) {
    JsonView pv = ev.object("profile");
    prof.enabled = true;
    prof.rc = make_rc(pv.object("observable"));
    prof.bins = static_cast<int>(pv.integer("bins", prof.bins));
    prof.lo = pv.required_number("min");
    prof.hi = pv.required_number("max");
    prof.min_mass = pv.number("min_mass", prof.min_mass);
    pv.finish();
  }
  bool want_expectation = ev.has("expectation");
  RCFunction expect_rc;
  if (want_expectation) {
    JsonView xv = ev.object("expectation");
    expect_rc = make_rc(xv.object("observable"));
    xv.finish();
  }
  ev.finish();
  consume_shared_sections(root);
  root.finish();

  const bool pair_mode = !ck_a.empty() || !ck_b.empty();
  if (pair_mode && (ck_a.empty() || ck_b.empty()))
    errors.push_back("config.estimate: both 'checkpoint_a' and 'checkpoint_b' are required");
  if (!pair_mode && ck_single.empty() && samples_path.empty())
    errors.push_back(
        "config.estimate: need 'checkpoint', 'samples', or a checkpoint pair");
  if (!pair_mode && !prof.enabled && !want_expectation)
    errors.push_back("config.estimate: nothing requested (profile/expectation)");
  if (n < 2) errors.push_back("config.estimate: 'n' must be >= 2");
  for (double t : taus)
    if (!(t > 0.0)) errors.push_back("config.estimate: temperatures must be > 0");
  if (!errors.empty()) return report_config_errors(errors);

  fs::create_directories(ctx.out_dir);
  WallClock clock;
  sys.model->reset_energy_calls();
  Rng rng(ctx.seed);

  RunManifest man;
  man.command = "free-energy";
  man.config_hash = config_hash(cfg);
  man.seed = ctx.seed;

  if (pair_mode) {
    const FlowStack flow_a = load_checkpoint(ck_a);
    const FlowStack flow_b = load_checkpoint(ck_b);
    CsvWriter w(ctx.out_dir + "/delta_a.csv", {"tau", "delta_A", "std_err", "n_used"});
    for (double tau : taus) {
      const DeltaAEstimate est =
          two_bg_free_energy_difference(flow_a, flow_b, *sys.model, tau, n, rng, resamples);
      w.row({est.tau, est.delta_a, est.std_err, static_cast<double>(est.n_used)});
      std::cout << "tau = " << tau << ": delta_A = " << est.delta_a << " +- "
                << est.std_err << " (n_used = " << est.n_used << ")\n";
    }
  } else {
    std::optional<CsvWriter> pw, xw;
    if (prof.enabled)
      pw.emplace(ctx.out_dir + "/profile.csv",
                 std::vector<std::string>{"tau", "r_center", "free_energy",
                                          "weight_mass", "masked"});
    if (want_expectation)
      xw.emplace(ctx.out_dir + "/expectation.csv",
                 std::vector<std::string>{"tau", "value", "n_eff", "n_valid"});

    const auto handle = [&](double tau, const Matrix& xv, const Vector& lw) {
      if (prof.enabled) {
        Vector r(xv.rows());
        for (Eigen::Index i = 0; i < xv.rows(); ++i) r[i] = prof.rc.value(xv.row(i).transpose());
        const FreeEnergyProfile p =
            free_energy_profile(r, lw, prof.bins, prof.lo, prof.hi, prof.min_mass);
        write_profile_rows(*pw, tau, p);
      }
      if (want_expectation) {
        Vector o(xv.rows());
        for (Eigen::Index i = 0; i < xv.rows(); ++i) o[i] = expect_rc.value(xv.row(i).transpose());
        xw->row({tau, weighted_expectation(lw, o), effective_sample_size(lw),
                 static_cast<double>(lw.size())});
      }
    };

    if (!samples_path.empty()) {
      const Matrix m = read_matrix_csv(samples_path);
      if (m.cols() < 4) throw ConfigError("samples file has too few columns");
      const Eigen::Index d = m.cols() - 3;
      if (d != sys.model->dim())
        throw ConfigError("samples file width does not match the configured system");
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (m(i, d + 2) != 0.0 && std::isfinite(m(i, d))) keep.push_back(i);
      if (keep.size() < 2) throw EstimatorDegenerateError("samples file: too few valid rows");
      Matrix xv(static_cast<Eigen::Index>(keep.size()), d);
      Vector lw(static_cast<Eigen::Index>(keep.size()));
      for (std::size_t i = 0; i < keep.size(); ++i) {
        xv.row(static_cast<Eigen::Index>(i)) = m.row(keep[i]).head(d);
        lw[static_cast<Eigen::Index>(i)] = m(keep[i], d);
      }
      handle(m(keep.front(), d + 1), xv, lw);
    } else {
      const FlowStack flow = load_checkpoint(ck_single);
      if (flow.x_width() != sys.model->dim())
        throw ConfigError("checkpoint width does not match the configured system");
      for (double tau : taus) {
        const WeightedSamples ws = generate_weighted(flow, *sys.model, n, tau, rng);
        handle(tau, ws.valid_x(), ws.valid_log_weights());
      }
    }
  }

  man.energy_calls = sys.model->energy_calls();
  man.singularity_events = sys.model->singularity_events();
  man.wall_seconds = clock.seconds();
  write_manifest(ctx.out_dir + "/manifest.json", man);
  std::cout << "outputs in " << ctx.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// explore
// ---------------------------------------------------------------------------

int cmd_explore(const CommonFlags& flags) {
  json cfg = load_config_file(flags.config_path);
  std::vector<std::string> errors;
  JsonView root(&cfg, "config", &errors);
  RunContext ctx = begin_run(flags, root);
  SystemInfo sys = make_system(root.object("system"));
  FlowConfig fcfg = make_flow_config(root.object("flow"), sys.zmatrix);
  JsonView xv = root.object("explore");
  ExploreConfig ecfg;
  ecfg.iterations = xv.integer("iterations", ecfg.iterations);
  ecfg.batch_size = xv.integer("batch_size", ecfg.batch_size);
  ecfg.lr = xv.number("lr", ecfg.lr);
  ecfg.init_ml_iterations = xv.integer("init_ml_iterations", ecfg.init_ml_iterations);
  ecfg.init_ml_batch = xv.integer("init_ml_batch", ecfg.init_ml_batch);
  ecfg.w_ml = xv.number("w_ML", ecfg.w_ml);
  ecfg.w_kl = xv.number("w_KL", ecfg.w_kl);
  ecfg.e_high = xv.number("E_high", ecfg.e_high);
  ecfg.e_max = xv.number("E_max", ecfg.e_max);
  ecfg.tau = xv.number("tau", ecfg.tau);
  ecfg.step = xv.number("step", ecfg.step);
  ecfg.target_acceptance = xv.number("target_acceptance", ecfg.target_acceptance);
  ecfg.adapt_factor = xv.number("adapt_factor", ecfg.adapt_factor);
  ecfg.step_min = xv.number("step_min", ecfg.step_min);
  ecfg.step_max = xv.number("step_max", ecfg.step_max);
  const long buffer_size = xv.integer("buffer_size", 10000);
  const double noise_std = xv.number("noise_std", 0.05);
  const std::string seed_data = xv.str("data", "");
  xv.finish();
  consume_shared_sections(root);
  root.finish();
  const bool coord_arch = fcfg.architecture.find('W') != std::string::npos ||
                          fcfg.architecture.find('M') != std::string::npos;
  if (coord_arch && seed_data.empty())
    errors.push_back("config.explore: coordinate layers require 'data'");
  if (buffer_size < 1) errors.push_back("config.explore: 'buffer_size' must be >= 1");
  if (!errors.empty()) return report_config_errors(errors);

  fs::create_directories(ctx.out_dir);
  WallClock clock;
  sys.model->reset_energy_calls();
  Rng rng(ctx.seed);

  Matrix seeds;
  if (!seed_data.empty()) {
    seeds = read_matrix_csv(seed_data);
    if (seeds.cols() != sys.model->dim())
      throw ConfigError("explore seed data width does not match the system");
  } else {
    seeds = sys.x0.transpose();
  }
  FlowStack flow = build_flow(fcfg, sys.model->dim(), seeds.rows() > 1 ? &seeds : nullptr, rng);
  SampleBuffer buffer = make_buffer(*sys.model, seeds, buffer_size, noise_std, rng);

  std::vector<std::string> xcols;
  for (Eigen::Index j = 0; j < buffer.x.cols(); ++j) xcols.push_back("x" + std::to_string(j));
  write_matrix_csv(ctx.out_dir + "/buffer_initial.csv", xcols, buffer.x);

  RunManifest man;
  man.command = "explore";
  man.config_hash = config_hash(cfg);
  man.seed = ctx.seed;
  int exit_code = 0;
  try {
    const ExploreResult res = latent_explore(flow, *sys.model, buffer, ecfg, rng);
    CsvWriter dw(ctx.out_dir + "/diagnostics.csv",
                 {"iteration", "J_ML", "J_KL", "step", "acceptance", "efficiency"});
    for (const ExploreRow& r : res.diagnostics)
      dw.row({static_cast<double>(r.iteration), r.j_ml, r.j_kl, r.step, r.acceptance,
              r.efficiency});
    std::cout << "explored " << res.diagnostics.size() << " iterations, final step "
              << res.final_step << ", invalid proposals " << res.invalid_proposals
              << "\n";
  } catch (const StageAbortError& e) {
    man.warnings.push_back(std::string("stage abort: ") + e.what());
    std::cerr << "stage abort: " << e.what() << "\n";
    exit_code = 3;
  }

  write_matrix_csv(ctx.out_dir + "/buffer_final.csv", xcols, buffer.x);
  save_checkpoint(ctx.out_dir + "/checkpoint.json", flow, &rng);

  man.energy_calls = sys.model->energy_calls();
  man.singularity_events = sys.model->singularity_events();
  man.wall_seconds = clock.seconds();
  write_manifest(ctx.out_dir + "/manifest.json", man);
  std::cout << "outputs in " << ctx.out_dir
            << " (diagnostics.csv, buffer_initial.csv, buffer_final.csv, checkpoint.json)\n";
  return exit_code;
}

// ---------------------------------------------------------------------------
// baseline metropolis / umbrella
// ---------------------------------------------------------------------------

int cmd_baseline_metropolis(const CommonFlags& flags) {
  json cfg = load_config_file(flags.config_path);
  std::vector<std::string> errors;
  JsonView root(&cfg, "config", &errors);
  RunContext ctx = begin_run(flags, root);
  SystemInfo sys = make_system(root.object("system"));
  JsonView bv = root.object("baseline");
  JsonView mv = bv.object("metropolis");
  MetropolisConfig mcfg;
  mcfg.steps = mv.integer("steps", 1000);
  mcfg.sigma = mv.number("sigma", sys.proposal_sigma);
  mcfg.stride = mv.integer("stride", 1);
  const double tau = mv.number("tau", 1.0);
  const long equilibration = mv.integer("equilibration", 0);
  std::vector<Vector> starts;
  for (const std::vector<double>& c : mv.number_rows("chains"))
    starts.push_back(
        Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size())));
  mv.finish();
  bv.object("umbrella");  // sibling section, consumed without validation
  bv.finish();
  consume_shared_sections(root);
  root.finish();
  if (starts.empty() && sys.model) starts.push_back(sys.x0);
  for (const Vector& s : starts)
    if (sys.model && s.size() != sys.model->dim())
      errors.push_back("config.baseline.metropolis: chain start has wrong dimension");
  if (!errors.empty()) return report_config_errors(errors);

  fs::create_directories(ctx.out_dir);
  WallClock clock;
  sys.model->reset_energy_calls();
  Rng rng(ctx.seed);

  std::vector<Matrix> trajs;
  std::vector<Vector> energies;
  CsvWriter chains(ctx.out_dir + "/chains.csv", {"chain", "acceptance", "frames"});
  for (std::size_t c = 0; c < starts.size(); ++c) {
    Vector x0 = starts[c];
    if (equilibration > 0) {
      MetropolisConfig eq = mcfg;
      eq.steps = equilibration;
      eq.stride = equilibration;
      eq.x0 = x0;
      x0 = metropolis_chain(*sys.model, eq, tau, rng).last;
    }
    MetropolisConfig mc = mcfg;
    mc.x0 = x0;
    const MetropolisResult res = metropolis_chain(*sys.model, mc, tau, rng);
    chains.row({static_cast<double>(c), res.acceptance,
                static_cast<double>(res.trajectory.rows())});
    trajs.push_back(res.trajectory);
    energies.push_back(res.energies);
  }
  Eigen::Index total = 0;
  for (const Matrix& t : trajs) total += t.rows();
  Matrix all(total, sys.model->dim());
  Vector all_u(total);
  Eigen::Index off = 0;
  for (std::size_t c = 0; c < trajs.size(); ++c) {
    all.middleRows(off, trajs[c].rows()) = trajs[c];
    all_u.segment(off, trajs[c].rows()) = energies[c];
    off += trajs[c].rows();
  }
  std::vector<std::string> xcols;
  for (Eigen::Index j = 0; j < all.cols(); ++j) xcols.push_back("x" + std::to_string(j));
  write_matrix_csv(ctx.out_dir + "/data.csv", xcols, all);
  write_matrix_csv(ctx.out_dir + "/energies.csv", {"energy"}, Matrix(all_u));

  RunManifest man;
  man.command = "baseline metropolis";
  man.config_hash = config_hash(cfg);
  man.seed = ctx.seed;
  man.energy_calls = sys.model->energy_calls();
  man.singularity_events = sys.model->singularity_events();
  man.wall_seconds = clock.seconds();
  write_manifest(ctx.out_dir + "/manifest.json", man);
  std::cout << "wrote " << total << " frames from " << starts.size() << " chains to "
            << ctx.out_dir << "/data.csv\n";
  return 0;
}

int cmd_baseline_umbrella(const CommonFlags& flags) {
  json cfg = load_config_file(flags.config_path);
  std::vector<std::string> errors;
  JsonView root(&cfg, "config", &errors);
  RunContext ctx = begin_run(flags, root);
  SystemInfo sys = make_system(root.object("system"));
  JsonView bv = root.object("baseline");
  JsonView uv = bv.object("umbrella");
  UmbrellaConfig ucfg;
  {
    const std::vector<double> centers = uv.numbers("centers");
    if (!centers.empty()) {
      ucfg.centers = Eigen::Map<const Vector>(centers.data(),
                                              static_cast<Eigen::Index>(centers.size()));
    } else {
      const double lo = uv.number("center_min", 0.5);
      const double hi = uv.number("center_max", 2.5);
      const long count = uv.integer("windows", 35);
      if (count < 2) {
        uv.error("'windows' must be >= 2");
      } else {
        ucfg.centers.resize(count);
        for (long w = 0; w < count; ++w)
          ucfg.centers[w] = lo + (hi - lo) * static_cast<double>(w) /
                                     static_cast<double>(count - 1);
      }
    }
  }
  ucfg.k = uv.number("k", ucfg.k);
  ucfg.steps_per_window = uv.integer("steps_per_window", ucfg.steps_per_window);
  ucfg.sigma = uv.number("sigma", sys.proposal_sigma);
  ucfg.stride = uv.integer("stride", ucfg.stride);
  ucfg.equilibration = uv.number("equilibration", ucfg.equilibration);
  ucfg.backward_sweep = uv.boolean("backward", ucfg.backward_sweep);
  ucfg.rc = make_rc(uv.object("observable"));
  const double tau = uv.number("tau", 1.0);
  const int bins = static_cast<int>(uv.integer("bins", 2 * ucfg.centers.size()));
  const double rc_min = uv.number("rc_min", ucfg.centers.size() ? ucfg.centers[0] : 0.0);
  const double rc_max = uv.number(
      "rc_max", ucfg.centers.size() ? ucfg.centers[ucfg.centers.size() - 1] : 1.0);
  uv.finish();
  bv.object("metropolis");  // sibling section, consumed without validation
  bv.finish();
  consume_shared_sections(root);
  root.finish();
  if (!errors.empty()) return report_config_errors(errors);

  fs::create_directories(ctx.out_dir);
  WallClock clock;
  sys.model->reset_energy_calls();
  Rng rng(ctx.seed);
  ucfg.x0 = sys.x0;

  const UmbrellaResult res = umbrella_sample(*sys.model, ucfg, tau, rng);

  CsvWriter ww(ctx.out_dir + "/windows.csv",
               {"window", "center", "backward", "acceptance", "rc_mean"});
  for (std::size_t w = 0; w < res.windows.size(); ++w) {
    const UmbrellaWindow& win = res.windows[w];
    ww.row({static_cast<double>(w), win.center, win.backward ? 1.0 : 0.0,
            win.acceptance, win.rc_values.size() ? win.rc_values.mean() : 0.0});
  }

  RunManifest man;
  man.command = "baseline umbrella";
  man.config_hash = config_hash(cfg);
  man.seed = ctx.seed;
  man.warnings = res.warnings;

  const auto run_wham = [&](const std::vector<UmbrellaWindow>& wins,
                            const std::string& path) {
    std::vector<UmbrellaWindow> nonempty;
    for (const auto& w : wins)
      if (w.rc_values.size() > 0) nonempty.push_back(w);
    Vector centers(static_cast<Eigen::Index>(nonempty.size()));
    for (std::size_t w = 0; w < nonempty.size(); ++w)
      centers[static_cast<Eigen::Index>(w)] = nonempty[w].center;
    const Matrix counts = umbrella_histograms(nonempty, bins, rc_min, rc_max);
    WhamResult wh = wham(counts, centers, ucfg.k, tau, rc_min, rc_max);
    if (!wh.converged)
      man.warnings.push_back("wham did not converge for " + path);
    for (const std::string& w : wh.warnings) man.warnings.push_back(w);
    CsvWriter pw(path, {"r_center", "free_energy", "weight_mass", "masked"});
    for (Eigen::Index b = 0; b < wh.profile.centers.size(); ++b)
      pw.row({wh.profile.centers[b], wh.profile.free_energy[b], wh.profile.mass[b],
              wh.profile.masked[static_cast<std::size_t>(b)] ? 1.0 : 0.0});
  };

  run_wham(res.windows, ctx.out_dir + "/profile.csv");
  if (ucfg.backward_sweep) {
    std::vector<UmbrellaWindow> fwd, bwd;
    for (const auto& w : res.windows) (w.backward ? bwd : fwd).push_back(w);
    run_wham(fwd, ctx.out_dir + "/profile_forward.csv");
    run_wham(bwd, ctx.out_dir + "/profile_backward.csv");
  }
  for (const std::string& w : man.warnings) std::cerr << "warning: " << w << "\n";

  man.energy_calls = sys.model->energy_calls();
  man.singularity_events = sys.model->singularity_events();
  man.wall_seconds = clock.seconds();
  write_manifest(ctx.out_dir + "/manifest.json", man);
  std::cout << "outputs in " << ctx.out_dir << " (profile.csv, windows.csv)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

int cmd_check(std::uint64_t seed, double perturb) {
  CheckOptions opt;
  opt.seed = seed;
  opt.logdet_perturbation = perturb;
  const std::vector<CheckItem> items = run_property_battery(opt);
  for (const CheckItem& c : items)
    std::printf("%s %-28s value=%.3e tol=%.0e\n", c.pass ? "PASS" : "FAIL",
                c.name.c_str(), c.value, c.tolerance);
  return all_pass(items) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boltzmann generator toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string out_buf;
  std::uint64_t seed_buf = 0;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "JSON config file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_buf, "RNG seed (overrides config)");
    sub->add_option("--out", out_buf, "output directory (overrides config)");
    sub->add_option("--threads", flags.threads,
                    "reserved; execution is single-threaded");
  };

  CLI::App* train = app.add_subcommand("train", "run a training schedule");
  add_common(train);

  CLI::App* sample = app.add_subcommand("sample", "draw weighted samples");
  add_common(sample);
  std::string ck_buf;
  long n_buf = 0;
  double tau_buf = 0.0;
  std::optional<std::string> ck_flag;
  std::optional<long> n_flag;
  std::optional<double> tau_flag;
  sample->add_option("--checkpoint", ck_buf, "checkpoint file (overrides config)");
  sample->add_option("--n", n_buf, "sample count (overrides config)");
  sample->add_option("--tau", tau_buf, "relative temperature (overrides config)");

  CLI::App* free_energy =
      app.add_subcommand("free-energy", "profiles, expectations, or two-generator differences");
  add_common(free_energy);

  CLI::App* explore = app.add_subcommand("explore", "adaptive latent-space exploration");
  add_common(explore);

  CLI::App* baseline = app.add_subcommand("baseline", "Monte Carlo reference sampling");
  baseline->require_subcommand(1);
  CLI::App* metropolis = baseline->add_subcommand("metropolis", "local-move Metropolis chains");
  add_common(metropolis);
  CLI::App* umbrella = baseline->add_subcommand("umbrella", "umbrella windows + histogram reweighting");
  add_common(umbrella);

  CLI::App* check = app.add_subcommand("check", "run the invariant battery");
  std::uint64_t check_seed = 20240915;
  double perturb = 0.0;
  check->add_option("--seed", check_seed, "battery seed");
  check->add_option("--perturb-logdet", perturb,
                    "fault injection: offset added to reported log-determinants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // malformed command line is a configuration error
  }

  CLI::App* active = nullptr;
  for (CLI::App* sub : {train, sample, free_energy, explore, metropolis, umbrella})
    if (sub->parsed()) active = sub;
  if (active) {
    if (active->count("--seed")) flags.seed = seed_buf;
    if (active->count("--out")) flags.out = out_buf;
  }
  if (sample->parsed()) {
    if (sample->count("--checkpoint")) ck_flag = ck_buf;
    if (sample->count("--n")) n_flag = n_buf;
    if (sample->count("--tau")) tau_flag = tau_buf;
  }

  try {
    if (train->parsed()) return cmd_train(flags);
    if (sample->parsed()) return cmd_sample(flags, ck_flag, n_flag, tau_flag);
    if (free_energy->parsed()) return cmd_free_energy(flags);
    if (explore->parsed()) return cmd_explore(flags);
    if (baseline->parsed()) {
      if (metropolis->parsed()) return cmd_baseline_metropolis(flags);
      if (umbrella->parsed()) return cmd_baseline_umbrella(flags);
    }
    if (check->parsed()) return cmd_check(check_seed, perturb);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
