#include <catch2/catch_amalgamated.hpp>

#include <bg/check.hpp>
#include <bg/estimate/delta_a.hpp>
#include <bg/estimate/profile.hpp>
#include <bg/estimate/reweight.hpp>

using namespace bg;

namespace {

// Pure scaling map x = s z built from whitening statistics; its x-side
// covariance is s^2 I, so under u = |x|^2/2 it generates N(0, s^2 I).
FlowStack scaling_flow(double s) {
  const double c = s * std::sqrt(2.0);
  Matrix data(5, 2);
  data << c, 0.0, -c, 0.0, 0.0, c, 0.0, -c, 0.0, 0.0;
  FlowStack f;
  f.layers.emplace_back(fit_whitening(data));
  return f;
}

}  // namespace

TEST_CASE("a perfect generator yields exactly flat weights") {
  Rng rng(2);
  FlowConfig fc;
  fc.architecture = "R2";
  fc.hidden_layers = 1;
  fc.hidden_width = 8;
  FlowStack f = build_flow(fc, 2, nullptr, rng);  // fresh stack: identity map
  detail::GaussianTarget target(Vector::Zero(2), Matrix::Identity(2, 2));
  for (double tau : {1.0, 2.0}) {
    const WeightedSamples ws = generate_weighted(f, target, 400, tau, rng);
    REQUIRE(ws.n_discarded == 0);
    REQUIRE(ws.n_valid() == 400);
    REQUIRE(ws.log_weight.cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(effective_sample_size(ws.valid_log_weights()) ==
            Catch::Approx(400.0).margin(1e-9));
  }
}

TEST_CASE("log-weights of a scaling map match the closed form") {
  const double s = 1.2;
  FlowStack f = scaling_flow(s);
  detail::GaussianTarget target(Vector::Zero(2), Matrix::Identity(2, 2));
  const double tau = 1.0;

  Rng rng(77);
  const WeightedSamples ws = generate_weighted(f, target, 500, tau, rng);
  Rng replay(77);
  const Matrix z = std::sqrt(tau) * replay.normal_matrix(500, 2);
  REQUIRE((ws.z - z).cwiseAbs().maxCoeff() == 0.0);

  // log w = -s^2 |z|^2 / 2 + |z|^2 / 2 + 2 log s, using |x| = s |z|
  for (Eigen::Index i : {Eigen::Index(0), Eigen::Index(13), Eigen::Index(499)}) {
    const double q = z.row(i).squaredNorm();
    const double expected = 0.5 * (1.0 - s * s) * q + 2.0 * std::log(s);
    REQUIRE(ws.log_weight[i] == Catch::Approx(expected).margin(1e-9));
  }

  // importance estimate of E[|x|^2] under the target, which is 2
  const Vector lw = ws.valid_log_weights();
  const Vector obs = ws.valid_x().rowwise().squaredNorm();
  REQUIRE(weighted_expectation(lw, obs) == Catch::Approx(2.0).margin(0.2));
  const double neff = effective_sample_size(lw);
  REQUIRE(neff > 120.0);
  REQUIRE(neff < 500.0);
}

TEST_CASE("effective sample size follows the weight ratios") {
  Vector lw(3);
  lw << 0.0, 0.0, std::log(2.0);  // weights 1, 1, 2
  REQUIRE(effective_sample_size(lw) == Catch::Approx(8.0 / 3.0).margin(1e-12));
  REQUIRE(effective_sample_size(Vector()) == 0.0);

  // constant weights saturate the bound n_eff = n
  REQUIRE(effective_sample_size(Vector::Constant(7, 5.0)) ==
          Catch::Approx(7.0).margin(1e-9));
  // any spread puts it strictly below n
  Vector spread(4);
  spread << 0.0, 0.1, -0.3, 0.7;
  REQUIRE(effective_sample_size(spread) < 4.0 - 1e-6);
}

TEST_CASE("weighted expectations are shift-invariant and exact on constants") {
  Rng rng(5);
  Vector lw(64), obs(64);
  for (int i = 0; i < 64; ++i) {
    lw[i] = rng.normal();
    obs[i] = rng.uniform(-2.0, 2.0);
  }
  const double base = weighted_expectation(lw, obs);
  REQUIRE(weighted_expectation(Vector(lw.array() + 1000.0), obs) ==
          Catch::Approx(base).margin(1e-12));
  REQUIRE(weighted_expectation(Vector(lw.array() - 1000.0), obs) ==
          Catch::Approx(base).margin(1e-12));
  REQUIRE(weighted_expectation(lw, Vector::Constant(64, 3.25)) ==
          Catch::Approx(3.25).margin(1e-12));
  // uniform weights reduce to the plain mean
  REQUIRE(weighted_expectation(Vector::Zero(64), obs) ==
          Catch::Approx(obs.mean()).margin(1e-12));

  REQUIRE_THROWS_AS(weighted_expectation(Vector(), Vector()), EstimatorDegenerateError);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(weighted_expectation(Vector::Constant(3, neg_inf), Vector::Zero(3)),
                    EstimatorDegenerateError);
  REQUIRE_THROWS_AS(weighted_expectation(Vector::Zero(2), Vector::Zero(3)), ContractError);
}

TEST_CASE("weighted sample compaction drops invalid rows") {
  WeightedSamples ws;
  ws.x = Matrix(3, 2);
  ws.x << 1, 2, 3, 4, 5, 6;
  ws.log_weight = Vector(3);
  ws.log_weight << 0.5, std::numeric_limits<double>::quiet_NaN(), -0.25;
  ws.valid = {1, 0, 1};
  ws.n_discarded = 1;
  REQUIRE(ws.n_valid() == 2);
  const Vector lw = ws.valid_log_weights();
  REQUIRE(lw.size() == 2);
  REQUIRE(lw[0] == 0.5);
  REQUIRE(lw[1] == -0.25);
  const Matrix vx = ws.valid_x();
  REQUIRE(vx.rows() == 2);
  REQUIRE(vx(1, 0) == 5.0);
}

TEST_CASE("profile bin masses and anchoring") {
  // 75 samples in the left bin, 25 in the right: F_right - F_left = log 3
  Vector r(100), lw = Vector::Zero(100);
  for (int i = 0; i < 100; ++i) r[i] = i < 75 ? 0.25 : 0.75;
  const FreeEnergyProfile p = free_energy_profile(r, lw, 2, 0.0, 1.0);
  REQUIRE(p.centers.size() == 2);
  REQUIRE(p.mass[0] == Catch::Approx(75.0).margin(1e-9));
  REQUIRE(p.mass[1] == Catch::Approx(25.0).margin(1e-9));
  REQUIRE(p.n_unmasked() == 2);
  REQUIRE(p.free_energy[0] == 0.0);
  REQUIRE(p.free_energy[1] == Catch::Approx(std::log(3.0)).margin(1e-12));

  // reweighting moves mass between bins: weight 2 on the right bin
  Vector lw2 = lw;
  for (int i = 75; i < 100; ++i) lw2[i] = std::log(6.0);
  const FreeEnergyProfile q = free_energy_profile(r, lw2, 2, 0.0, 1.0);
  REQUIRE(q.free_energy[1] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(q.free_energy[0] == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("profile masks empty and underweight bins") {
  Vector r(50), lw = Vector::Zero(50);
  for (int i = 0; i < 50; ++i) r[i] = 0.1;  // everything in bin 0 of 2
  const FreeEnergyProfile p = free_energy_profile(r, lw, 2, 0.0, 1.0);
  REQUIRE(p.masked == std::vector<char>{0, 1});
  REQUIRE(p.free_energy[0] == 0.0);
  REQUIRE(std::isnan(p.free_energy[1]));
  REQUIRE(p.n_unmasked() == 1);

  // min_mass above any bin's content masks everything
  Vector r2(4), lw2 = Vector::Zero(4);
  r2 << 0.1, 0.3, 0.6, 0.9;
  REQUIRE_THROWS_AS(free_energy_profile(r2, lw2, 2, 0.0, 1.0, 10.0),
                    EstimatorDegenerateError);
  // samples entirely out of range leave all bins empty
  Vector far = Vector::Constant(4, 5.0);
  REQUIRE_THROWS_AS(free_energy_profile(far, lw2, 2, 0.0, 1.0),
                    EstimatorDegenerateError);

  REQUIRE_THROWS_AS(free_energy_profile(r2, lw2, 1, 0.0, 1.0), ConfigError);
  REQUIRE_THROWS_AS(free_energy_profile(r2, lw2, 4, 1.0, 0.0), ConfigError);
  REQUIRE_THROWS_AS(free_energy_profile(Vector(), Vector(), 4, 0.0, 1.0),
                    EstimatorDegenerateError);
}

TEST_CASE("identical generators give an exactly zero free energy difference") {
  Rng rng(11);
  FlowStack f = detail::small_random_flow("R2", 2, nullptr, 0.3, rng);
  DoubleWell dw;
  Rng est_rng(21);
  const DeltaAEstimate est = two_bg_free_energy_difference(f, f, dw, 1.0, 200, est_rng);
  REQUIRE(est.delta_a == 0.0);
  REQUIRE(est.std_err == 0.0);
  REQUIRE(est.n_used == 200);
  REQUIRE(est.tau == 1.0);
}

TEST_CASE("swapping the generators flips the sign exactly") {
  Rng rng(13);
  FlowStack a = detail::small_random_flow("R2", 2, nullptr, 0.3, rng);
  FlowStack b = detail::small_random_flow("R3", 2, nullptr, 0.3, rng);
  DoubleWell dw;
  Rng r1(31), r2(31);
  const DeltaAEstimate ab = two_bg_free_energy_difference(a, b, dw, 1.0, 300, r1);
  const DeltaAEstimate ba = two_bg_free_energy_difference(b, a, dw, 1.0, 300, r2);
  REQUIRE(ab.delta_a == -ba.delta_a);
  REQUIRE(ab.n_used == ba.n_used);
  REQUIRE(ab.std_err == ba.std_err);
}

TEST_CASE("generator pair recovers a known free energy gap") {
  // under u = |x|^2/2 at tau 1, the state N(0, s^2 I) sits at
  // A(s) - A(1) = d (s^2 - 1)/2 - d log s relative to N(0, I)
  const double s = 1.2;
  FlowStack a = scaling_flow(1.0);
  FlowStack b = scaling_flow(s);
  detail::GaussianTarget target(Vector::Zero(2), Matrix::Identity(2, 2));
  Rng rng(41);
  const DeltaAEstimate est = two_bg_free_energy_difference(a, b, target, 1.0, 20000, rng);
  const double truth = (s * s - 1.0) - 2.0 * std::log(s);
  REQUIRE(est.delta_a == Catch::Approx(truth).margin(0.02));
  // bootstrap error should be close to the exact standard error of the mean
  REQUIRE(est.std_err == Catch::Approx(0.0031).margin(0.0015));
  REQUIRE_THROWS_AS(two_bg_free_energy_difference(a, b, target, 1.0, 1, rng),
                    ContractError);
}

TEST_CASE("bootstrap errors are deterministic and scale correctly") {
  Vector constant = Vector::Constant(50, 2.5);
  Rng rng(51);
  REQUIRE(bootstrap_error(constant, 200, rng) == 0.0);

  Vector series(400);
  Rng data_rng(52);
  for (int i = 0; i < 400; ++i) series[i] = 2.0 * data_rng.normal();
  Rng b1(53), b2(53);
  const double e1 = bootstrap_error(series, 300, b1);
  const double e2 = bootstrap_error(series, 300, b2);
  REQUIRE(e1 == e2);
  REQUIRE(e1 == Catch::Approx(2.0 / 20.0).margin(0.03));

  REQUIRE_THROWS_AS(bootstrap_error(Vector(), 200, rng), ContractError);
  REQUIRE_THROWS_AS(bootstrap_error(series, 99, rng), ContractError);
}

TEST_CASE("history tails give the training-based difference estimate") {
  Vector ja(8), jb(8);
  ja << 100.0, 90.0, 80.0, 70.0, 1.0, 1.0, 1.0, 1.0;
  jb << 50.0, 40.0, 30.0, 20.0, 3.5, 3.5, 3.5, 3.5;
  Rng rng(61);
  const DeltaAEstimate est = delta_a_from_histories(ja, jb, 2.0, rng, 0.5);
  REQUIRE(est.delta_a == Catch::Approx(2.5).margin(1e-12));
  REQUIRE(est.std_err == 0.0);  // both tails are constant
  REQUIRE(est.n_used == 8);
  REQUIRE(est.tau == 2.0);
  REQUIRE_THROWS_AS(delta_a_from_histories(ja, jb, 1.0, rng, 0.0), ContractError);
  REQUIRE_THROWS_AS(delta_a_from_histories(ja, jb, 1.0, rng, 1.5), ContractError);
}
