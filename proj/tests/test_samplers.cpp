#include <catch2/catch_amalgamated.hpp>

#include <bg/check.hpp>
#include <bg/sample/explore.hpp>
#include <bg/sample/metropolis.hpp>
#include <bg/sample/umbrella.hpp>

using namespace bg;

TEST_CASE("zero proposal width accepts every move and goes nowhere") {
  DoubleWell dw;
  MetropolisConfig cfg;
  cfg.sigma = 0.0;
  cfg.steps = 12;
  cfg.stride = 3;
  cfg.x0 = Vector(2);
  cfg.x0 << 1.0, -0.5;
  Rng rng(1);
  const MetropolisResult res = metropolis_chain(dw, cfg, 1.0, rng);
  REQUIRE(res.acceptance == 1.0);
  REQUIRE(res.trajectory.rows() == 4);
  for (Eigen::Index r = 0; r < 4; ++r) {
    REQUIRE(res.trajectory(r, 0) == 1.0);
    REQUIRE(res.trajectory(r, 1) == -0.5);
    REQUIRE(res.energies[r] == dw.energy(cfg.x0));
  }
  REQUIRE((res.last - cfg.x0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("metropolis rejects invalid configuration") {
  DoubleWell dw;
  MetropolisConfig cfg;
  cfg.x0 = Vector::Zero(2);
  Rng rng(2);
  cfg.sigma = -0.1;
  REQUIRE_THROWS_AS(metropolis_chain(dw, cfg, 1.0, rng), ContractError);
  cfg.sigma = 0.1;
  cfg.stride = 0;
  REQUIRE_THROWS_AS(metropolis_chain(dw, cfg, 1.0, rng), ContractError);
  cfg.stride = 1;
  cfg.x0 = Vector::Zero(3);
  REQUIRE_THROWS_AS(metropolis_chain(dw, cfg, 1.0, rng), ContractError);
  cfg.x0 = Vector::Constant(2, std::numeric_limits<double>::quiet_NaN());
  REQUIRE_THROWS_AS(metropolis_chain(dw, cfg, 1.0, rng), ContractError);
}

TEST_CASE("metropolis crosses the barrier and samples the harmonic coordinate") {
  DoubleWell dw;
  MetropolisConfig cfg;
  cfg.sigma = 0.5;
  cfg.steps = 40000;
  cfg.stride = 10;
  cfg.x0 = Vector(2);
  cfg.x0 << 2.3, 0.0;
  Rng rng(3);
  const MetropolisResult res = metropolis_chain(dw, cfg, 1.0, rng);
  REQUIRE(res.acceptance > 0.1);
  REQUIRE(res.acceptance < 0.9);
  // started in the shallow right well, must reach the deeper left well
  REQUIRE(res.trajectory.col(0).minCoeff() < -1.0);
  REQUIRE(res.trajectory.col(0).maxCoeff() > 1.0);
  // the y marginal is a unit Gaussian at tau 1
  const auto y = res.trajectory.col(1);
  const double mean = y.mean();
  const double var = (y.array() - mean).square().mean();
  REQUIRE(mean == Catch::Approx(0.0).margin(0.12));
  REQUIRE(var == Catch::Approx(1.0).margin(0.2));
  // recorded energies are the model energies of the recorded frames
  for (Eigen::Index r : {Eigen::Index(0), Eigen::Index(1999), Eigen::Index(3999)})
    REQUIRE(res.energies[r] == dw.energy(res.trajectory.row(r).transpose()));
}

TEST_CASE("umbrella windows pin the coordinate at the biased mean") {
  // bias k (y - c)^2 / 2 on top of the harmonic y term of the double well:
  // the window marginal is Gaussian with mean k c / (1 + k)
  DoubleWell dw;
  UmbrellaConfig cfg;
  cfg.centers = Vector(2);
  cfg.centers << 0.6, 1.0;
  cfg.k = 3.0;
  cfg.rc.kind = RCFunction::Kind::Coordinate;
  cfg.rc.index = 1;
  cfg.steps_per_window = 40000;
  cfg.sigma = 0.4;
  cfg.stride = 5;
  cfg.equilibration = 0.2;
  cfg.backward_sweep = true;
  cfg.x0 = Vector(2);
  cfg.x0 << -2.5, 0.6;
  Rng rng(5);
  const UmbrellaResult res = umbrella_sample(dw, cfg, 1.0, rng);

  REQUIRE(res.windows.size() == 4);  // forward 0.6, 1.0 then backward 1.0, 0.6
  REQUIRE(res.windows[0].center == 0.6);
  REQUIRE(res.windows[1].center == 1.0);
  REQUIRE(res.windows[2].center == 1.0);
  REQUIRE(res.windows[3].center == 0.6);
  REQUIRE_FALSE(res.windows[0].backward);
  REQUIRE_FALSE(res.windows[1].backward);
  REQUIRE(res.windows[2].backward);
  REQUIRE(res.windows[3].backward);

  // (40000 - 8000 equilibration) / 5 recorded values per window
  for (const auto& w : res.windows) REQUIRE(w.rc_values.size() == 6400);
  REQUIRE(res.windows[0].rc_values.mean() == Catch::Approx(3.0 * 0.6 / 4.0).margin(0.03));
  REQUIRE(res.windows[1].rc_values.mean() == Catch::Approx(3.0 * 1.0 / 4.0).margin(0.03));
  // forward and backward passes of the same window agree (no hysteresis on
  // a coordinate that equilibrates instantly)
  REQUIRE(res.windows[1].rc_values.mean() ==
          Catch::Approx(res.windows[2].rc_values.mean()).margin(0.04));
}

TEST_CASE("umbrella validates its schedule") {
  DoubleWell dw;
  UmbrellaConfig cfg;
  cfg.centers = Vector(2);
  cfg.centers << 0.5, 0.5;  // not strictly increasing
  cfg.rc.kind = RCFunction::Kind::Coordinate;
  cfg.rc.index = 1;
  cfg.x0 = Vector::Zero(2);
  Rng rng(7);
  REQUIRE_THROWS_AS(umbrella_sample(dw, cfg, 1.0, rng), ContractError);
  cfg.centers << 0.5, 1.0;
  cfg.k = 0.0;
  REQUIRE_THROWS_AS(umbrella_sample(dw, cfg, 1.0, rng), ContractError);
  cfg.k = 1.0;
  cfg.equilibration = 1.0;
  REQUIRE_THROWS_AS(umbrella_sample(dw, cfg, 1.0, rng), ContractError);
  cfg.equilibration = 0.1;
  cfg.x0 = Vector::Zero(5);
  REQUIRE_THROWS_AS(umbrella_sample(dw, cfg, 1.0, rng), ContractError);
}

TEST_CASE("window histograms count in-range values per window") {
  UmbrellaWindow w;
  w.rc_values = Vector(5);
  w.rc_values << 0.05, 0.15, 0.95, 1.5, -0.1;  // last two out of range
  const Matrix counts = umbrella_histograms({w}, 10, 0.0, 1.0);
  REQUIRE(counts.rows() == 1);
  REQUIRE(counts.cols() == 10);
  REQUIRE(counts(0, 0) == 1.0);
  REQUIRE(counts(0, 1) == 1.0);
  REQUIRE(counts(0, 9) == 1.0);
  REQUIRE(counts.sum() == 3.0);
  REQUIRE_THROWS_AS(umbrella_histograms({w}, 0, 0.0, 1.0), ContractError);
}

TEST_CASE("histogram reweighting recovers an analytic harmonic profile") {
  // windows drawn exactly from the binned biased densities of u = a r^2 / 2;
  // the self-consistent solution must reproduce both the profile and the
  // window offsets to solver precision
  const double a = 2.0, tau = 1.5, k = 8.0;
  const int n_win = 7, n_bin = 48;
  const double lo = -2.0, hi = 2.0;
  const double width = (hi - lo) / n_bin;
  Vector centers(n_win);
  for (int w = 0; w < n_win; ++w) centers[w] = -1.5 + 0.5 * w;
  Vector r(n_bin), u(n_bin);
  for (int b = 0; b < n_bin; ++b) {
    r[b] = lo + (b + 0.5) * width;
    u[b] = 0.5 * a * r[b] * r[b];
  }
  Matrix counts(n_win, n_bin);
  for (int w = 0; w < n_win; ++w) {
    for (int b = 0; b < n_bin; ++b) {
      const double dr = r[b] - centers[w];
      counts(w, b) = std::exp(-(u[b] + 0.5 * k * dr * dr) / tau);
    }
    counts.row(w) *= 1e6 / counts.row(w).sum();
  }

  const WhamResult res = wham(counts, centers, k, tau, lo, hi);
  REQUIRE(res.converged);
  REQUIRE(res.warnings.empty());
  REQUIRE(res.window_free_energy[0] == 0.0);

  // profile equals u/tau up to its minimum
  const double u_min = u.minCoeff() / tau;
  for (int b = 0; b < n_bin; ++b) {
    REQUIRE_FALSE(res.profile.masked[static_cast<std::size_t>(b)]);
    REQUIRE(res.profile.free_energy[b] ==
            Catch::Approx(u[b] / tau - u_min).margin(1e-5));
  }

  // window offsets match -log sum_b p0(b) exp(-bias) re-anchored at window 0
  Vector p0(n_bin);
  for (int b = 0; b < n_bin; ++b) p0[b] = std::exp(-u[b] / tau);
  p0 /= p0.sum();
  Vector f_ref(n_win);
  for (int w = 0; w < n_win; ++w) {
    Vector t(n_bin);
    for (int b = 0; b < n_bin; ++b) {
      const double dr = r[b] - centers[w];
      t[b] = std::log(p0[b]) - 0.5 * k * dr * dr / tau;
    }
    f_ref[w] = -log_sum_exp(t);
  }
  f_ref.array() -= f_ref[0];
  for (int w = 0; w < n_win; ++w)
    REQUIRE(res.window_free_energy[w] == Catch::Approx(f_ref[w]).margin(1e-5));
}

TEST_CASE("disjoint window histograms trigger an overlap warning") {
  Matrix counts(2, 4);
  counts << 5, 3, 0, 0, 0, 0, 4, 6;
  Vector centers(2);
  centers << 0.25, 0.75;
  const WhamResult res = wham(counts, centers, 10.0, 1.0, 0.0, 1.0);
  REQUIRE(res.warnings.size() == 1);
  REQUIRE(res.warnings[0].find("no histogram overlap between windows 0 and 1") !=
          std::string::npos);

  Matrix overlapping(2, 4);
  overlapping << 5, 3, 1, 0, 0, 1, 4, 6;
  REQUIRE(wham(overlapping, centers, 10.0, 1.0, 0.0, 1.0).warnings.empty());

  REQUIRE_THROWS_AS(wham(counts, Vector::Zero(3), 10.0, 1.0, 0.0, 1.0), ContractError);
  Matrix neg = counts;
  neg(0, 0) = -1.0;
  REQUIRE_THROWS_AS(wham(neg, centers, 10.0, 1.0, 0.0, 1.0), ContractError);
  REQUIRE_THROWS_AS(wham(Matrix::Zero(2, 4), centers, 10.0, 1.0, 0.0, 1.0),
                    ContractError);
}

TEST_CASE("buffers cycle seeds and cache exact energies") {
  DoubleWell dw;
  Matrix seeds(2, 2);
  seeds << -2.5, 0.0, 2.3, 0.1;
  Rng rng(11);
  const SampleBuffer buf = make_buffer(dw, seeds, 5, 0.0, rng);
  REQUIRE(buf.size() == 5);
  for (long i = 0; i < 5; ++i) {
    REQUIRE((buf.x.row(i) - seeds.row(i % 2)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(buf.energy[i] == dw.energy(buf.x.row(i).transpose()));
  }
  // jitter perturbs the copies
  Rng rng2(12);
  const SampleBuffer noisy = make_buffer(dw, seeds, 5, 0.1, rng2);
  REQUIRE((noisy.x - buf.x).cwiseAbs().maxCoeff() > 1e-4);

  REQUIRE_THROWS_AS(make_buffer(dw, seeds, 0, 0.0, rng), ContractError);
  REQUIRE_THROWS_AS(make_buffer(dw, Matrix(0, 2), 3, 0.0, rng), ContractError);
  REQUIRE_THROWS_AS(make_buffer(dw, Matrix(1, 3), 3, 0.0, rng), ContractError);
  const Vector inf_seed = Vector::Constant(2, std::numeric_limits<double>::infinity());
  REQUIRE_THROWS_AS(make_buffer(dw, inf_seed, 3, 0.0, rng), ContractError);
}

TEST_CASE("step adaptation moves toward the target acceptance") {
  REQUIRE(adapt_step(0.5, 0.4, 0.3, 1.05, 1e-4, 10.0) == 0.5 * 1.05);
  REQUIRE(adapt_step(0.5, 0.2, 0.3, 1.05, 1e-4, 10.0) == 0.5 / 1.05);
  REQUIRE(adapt_step(0.5, 0.3, 0.3, 1.05, 1e-4, 10.0) == 0.5);  // hold at target
  REQUIRE(adapt_step(1e-4, 0.0, 0.3, 1.05, 1e-4, 10.0) == 1e-4);
  REQUIRE(adapt_step(10.0, 1.0, 0.3, 1.05, 1e-4, 10.0) == 10.0);
}

TEST_CASE("a zero-width latent sweep is a stationary identity proposal") {
  Rng rng(13);
  FlowStack f = detail::small_random_flow("R2", 2, nullptr, 0.3, rng);
  DoubleWell dw;
  Matrix seeds(1, 2);
  seeds << -2.5, 0.0;
  SampleBuffer buf = make_buffer(dw, seeds, 16, 0.05, rng);
  const Matrix before = buf.x;
  std::vector<long> rows;
  for (long i = 0; i < 16; ++i) rows.push_back(i);
  const LatentMoveResult res = latent_mh_sweep(f, dw, buf, rows, 1.0, 0.0, rng);
  REQUIRE(res.total == 16);
  REQUIRE(res.invalid == 0);
  REQUIRE(res.accepted == 16);  // roundtrip proposals carry no energy change
  REQUIRE((buf.x - before).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("latent sweeps preserve the Boltzmann well occupancy") {
  // equilibrate a buffer by local sampling, then push it through many
  // flow-space sweeps with a frozen random map: the left/right well split
  // must not drift, which exercises both log-determinant terms in the ratio
  DoubleWell dw;
  const double tau = 2.0;
  MetropolisConfig mc;
  mc.sigma = 0.7;
  mc.steps = 40000;
  mc.stride = 20;
  mc.x0 = Vector(2);
  mc.x0 << -2.5, 0.0;
  Rng rng(17);
  const MetropolisResult chain = metropolis_chain(dw, mc, tau, rng);
  SampleBuffer buf;
  buf.x = chain.trajectory;
  buf.energy = chain.energies;

  const auto right_fraction = [&]() {
    double k = 0.0;
    for (Eigen::Index i = 0; i < buf.x.rows(); ++i) k += buf.x(i, 0) > 0.0;
    return k / static_cast<double>(buf.x.rows());
  };
  const double before = right_fraction();
  REQUIRE(before > 0.05);
  REQUIRE(before < 0.6);

  FlowStack f = detail::small_random_flow("R2", 2, nullptr, 0.3, rng);
  std::vector<long> rows;
  for (long i = 0; i < buf.size(); ++i) rows.push_back(i);
  long accepted = 0;
  for (int sweep = 0; sweep < 25; ++sweep)
    accepted += latent_mh_sweep(f, dw, buf, rows, tau, 0.25, rng).accepted;
  REQUIRE(accepted > 25 * buf.size() / 20);  // the sweeps actually move
  REQUIRE(right_fraction() == Catch::Approx(before).margin(0.06));
  // cached energies stay consistent with the model
  for (Eigen::Index i : {Eigen::Index(0), Eigen::Index(777), Eigen::Index(1999)})
    REQUIRE(buf.energy[i] == dw.energy(buf.x.row(i).transpose()));
}

TEST_CASE("exploration validates its configuration") {
  Rng rng(19);
  FlowStack f = detail::small_random_flow("R2", 2, nullptr, 0.2, rng);
  DoubleWell dw;
  Matrix seeds(1, 2);
  seeds << -2.5, 0.0;
  SampleBuffer buf = make_buffer(dw, seeds, 8, 0.05, rng);
  ExploreConfig cfg;
  cfg.iterations = 1;
  cfg.init_ml_iterations = 0;
  cfg.batch_size = 9;  // exceeds the buffer
  REQUIRE_THROWS_AS(latent_explore(f, dw, buf, cfg, rng), ContractError);
  cfg.batch_size = 0;
  REQUIRE_THROWS_AS(latent_explore(f, dw, buf, cfg, rng), ContractError);
  cfg.batch_size = 4;
  cfg.tau = 0.0;
  REQUIRE_THROWS_AS(latent_explore(f, dw, buf, cfg, rng), ContractError);
  cfg.tau = 1.0;
  cfg.adapt_factor = 1.0;
  REQUIRE_THROWS_AS(latent_explore(f, dw, buf, cfg, rng), ContractError);
  cfg.adapt_factor = 1.02;
  cfg.target_acceptance = 1.0;
  REQUIRE_THROWS_AS(latent_explore(f, dw, buf, cfg, rng), ContractError);
  cfg.target_acceptance = 0.3;
  cfg.step = 0.0;
  REQUIRE_THROWS_AS(latent_explore(f, dw, buf, cfg, rng), ContractError);
}

TEST_CASE("zero exploration iterations change nothing") {
  Rng rng(23);
  FlowStack f = detail::small_random_flow("R2", 2, nullptr, 0.2, rng);
  const Vector params_before = f.parameters();
  DoubleWell dw;
  Matrix seeds(1, 2);
  seeds << -2.5, 0.0;
  SampleBuffer buf = make_buffer(dw, seeds, 8, 0.05, rng);
  const Matrix x_before = buf.x;
  ExploreConfig cfg;
  cfg.iterations = 0;
  cfg.init_ml_iterations = 0;
  cfg.batch_size = 4;
  const ExploreResult res = latent_explore(f, dw, buf, cfg, rng);
  REQUIRE(res.diagnostics.empty());
  REQUIRE(res.final_step == cfg.step);
  REQUIRE(res.invalid_proposals == 0);
  REQUIRE((buf.x - x_before).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((f.parameters() - params_before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exploration keeps its diagnostics and buffer consistent") {
  Rng rng(29);
  FlowConfig fc;
  fc.architecture = "R2";
  fc.hidden_layers = 1;
  fc.hidden_width = 12;
  FlowStack f = build_flow(fc, 2, nullptr, rng);
  DoubleWell dw;
  Matrix seeds(1, 2);
  seeds << -2.5, 0.0;
  SampleBuffer buf = make_buffer(dw, seeds, 128, 0.05, rng);
  ExploreConfig cfg;
  cfg.iterations = 40;
  cfg.init_ml_iterations = 10;
  cfg.init_ml_batch = 32;
  cfg.batch_size = 32;
  cfg.step = 0.2;
  const ExploreResult res = latent_explore(f, dw, buf, cfg, rng);
  REQUIRE(res.diagnostics.size() == 40);
  REQUIRE(res.diagnostics.front().step == 0.2);
  for (std::size_t t = 0; t < res.diagnostics.size(); ++t) {
    const ExploreRow& row = res.diagnostics[t];
    REQUIRE(row.iteration == static_cast<long>(t));
    REQUIRE(std::isfinite(row.j_ml));
    REQUIRE(std::isfinite(row.j_kl));
    REQUIRE(row.step >= cfg.step_min);
    REQUIRE(row.step <= cfg.step_max);
    REQUIRE(row.acceptance >= 0.0);
    REQUIRE(row.acceptance <= 1.0);
    REQUIRE(row.efficiency == row.step * row.acceptance);
    if (t > 0) {
      const ExploreRow& prev = res.diagnostics[t - 1];
      REQUIRE(row.step == adapt_step(prev.step, prev.acceptance, cfg.target_acceptance,
                                     cfg.adapt_factor, cfg.step_min, cfg.step_max));
    }
  }
  REQUIRE(res.final_step > 0.0);
  // accepted moves keep the cached energy in sync with the model
  for (long i = 0; i < buf.size(); ++i)
    REQUIRE(buf.energy[i] == dw.energy(buf.x.row(i).transpose()));
}
