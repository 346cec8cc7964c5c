#include <catch2/catch_amalgamated.hpp>

#include <bg/check.hpp>
#include <bg/flow/stack.hpp>

using namespace bg;

namespace {

// S and T nets that output a constant regardless of input: zero weights,
// constant bias, linear activation.
DenseNet constant_net(Eigen::Index in, Eigen::Index out, double value) {
  DenseNet net;
  DenseLayer l;
  l.W = Matrix::Zero(out, in);
  l.b = Vector::Constant(out, value);
  l.act = Act::Linear;
  net.layers = {l};
  net.output_scale = 1.0;
  return net;
}

CouplingLayer constant_coupling(double s0, double t0) {
  CouplingLayer c;
  c.idx_cond = {0};
  c.idx_trans = {1};
  c.s_net = constant_net(1, 1, s0);
  c.t_net = constant_net(1, 1, t0);
  return c;
}

FlowStack small_flow(const std::string& arch, Eigen::Index dim, const Matrix* data,
                     double param_scale, Rng& rng) {
  return detail::small_random_flow(arch, dim, data, param_scale, rng);
}

// Exact rank-2 five-point dataset with covariance diag(4, 1) and zero mean.
Matrix diag41_data() {
  Matrix d(5, 2);
  const double r = std::sqrt(8.0);
  d << r, 0.0,
      -r, 0.0,
       0.0, std::sqrt(2.0),
       0.0, -std::sqrt(2.0),
       0.0, 0.0;
  return d;
}

}  // namespace

TEST_CASE("freshly built coupling flow is the identity with zero log-determinant") {
  Rng rng(1);
  FlowConfig cfg;
  cfg.architecture = "R3";
  cfg.hidden_layers = 2;
  cfg.hidden_width = 16;
  FlowStack f = build_flow(cfg, 4, nullptr, rng);
  Matrix x = rng.normal_matrix(10, 4) * 5.0;
  XZEval fwd = flow_forward_xz(f, x, false);
  REQUIRE((fwd.z - x).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(fwd.logdet.cwiseAbs().maxCoeff() == 0.0);
  ZXEval inv = flow_inverse_zx(f, x, false);
  REQUIRE((inv.x - x).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(inv.logdet.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("coupling with constant scale and shift matches the closed form") {
  const double s0 = 0.7, t0 = -1.3;
  CouplingLayer c = constant_coupling(s0, t0);
  Matrix x(3, 2);
  x << 1.0, 2.0, -0.5, 0.0, 3.0, -4.0;
  Vector logdet = Vector::Zero(3);
  Matrix z = coupling_forward(c, x, logdet);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(z(i, 0) == x(i, 0));  // conditioner channel untouched
    REQUIRE(z(i, 1) == Catch::Approx(x(i, 1) * std::exp(s0) + t0).epsilon(1e-14));
    REQUIRE(logdet[i] == Catch::Approx(s0).epsilon(1e-14));
  }
  Vector logdet_inv = Vector::Zero(3);
  Matrix back = coupling_inverse(c, z, logdet_inv);
  REQUIRE((back - x).cwiseAbs().maxCoeff() < 1e-14);
  for (int i = 0; i < 3; ++i) REQUIRE(logdet_inv[i] == Catch::Approx(-s0).epsilon(1e-14));
}

TEST_CASE("coupling leaves its conditioner channels bit-identical") {
  Rng rng(9);
  FlowStack f = small_flow("R1", 4, nullptr, 0.5, rng);
  const auto& first = std::get<CouplingLayer>(f.layers[0]);
  Matrix x = rng.normal_matrix(6, 4);
  Vector logdet = Vector::Zero(6);
  Matrix z = coupling_forward(first, x, logdet);
  for (Eigen::Index idx : first.idx_cond)
    REQUIRE((z.col(idx) - x.col(idx)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random flow round-trips and log-determinants cancel") {
  Rng rng(17);
  for (const char* arch : {"R1", "R4"}) {
    FlowStack f = small_flow(arch, 2, nullptr, 0.5, rng);
    Matrix x = rng.normal_matrix(20, 2);
    XZEval fwd = flow_forward_xz(f, x, false);
    ZXEval inv = flow_inverse_zx(f, fwd.z, false);
    REQUIRE((inv.x - x).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((fwd.logdet + inv.logdet).cwiseAbs().maxCoeff() < 1e-10);
    for (char v : inv.valid) REQUIRE(v == 1);
  }
}

TEST_CASE("stack log-determinant is the sum over layers") {
  Rng rng(23);
  FlowStack f = small_flow("R1", 2, nullptr, 0.5, rng);  // two coupling layers
  Matrix x = rng.normal_matrix(5, 2);

  Vector ld_a = Vector::Zero(5), ld_b = Vector::Zero(5);
  Matrix mid = coupling_forward(std::get<CouplingLayer>(f.layers[0]), x, ld_a);
  coupling_forward(std::get<CouplingLayer>(f.layers[1]), mid, ld_b);
  XZEval fwd = flow_forward_xz(f, x, false);
  REQUIRE((fwd.logdet - (ld_a + ld_b)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("scale cap bounds each layer's log-determinant contribution") {
  Rng rng(31);
  FlowConfig cfg;
  cfg.architecture = "R1";
  cfg.hidden_layers = 1;
  cfg.hidden_width = 8;
  cfg.scale_cap = 3.0;
  FlowStack f = build_flow(cfg, 2, nullptr, rng);
  f.set_parameters(50.0 * rng.normal_vector(f.parameter_count()));  // saturate tanh
  Matrix x = rng.normal_matrix(40, 2) * 10.0;
  XZEval fwd = flow_forward_xz(f, x, false);
  // Two layers, each transforming one channel: |logdet| <= 2 * cap.
  REQUIRE(fwd.logdet.cwiseAbs().maxCoeff() <= 2.0 * cfg.scale_cap + 1e-12);
  REQUIRE(fwd.z.allFinite());
}

TEST_CASE("whitening recovers a diagonal covariance exactly") {
  WhiteningLayer w = fit_whitening(diag41_data());
  REQUIRE(w.x_width() == 2);
  REQUIRE(w.z_width() == 2);
  REQUIRE(w.mean.cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE(w.lambda[0] == Catch::Approx(4.0).margin(1e-12));
  REQUIRE(w.lambda[1] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(w.logdet_zx() == Catch::Approx(std::log(2.0)).margin(1e-12));
  REQUIRE(w.logdet_xz() == Catch::Approx(-std::log(2.0)).margin(1e-12));

  Matrix x(1, 2);
  x << 2.0, 0.0;  // one std along the leading direction
  Matrix z = w.forward(x);
  REQUIRE(std::abs(z(0, 0)) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(std::abs(z(0, 1)) < 1e-12);
  REQUIRE((w.inverse(z) - x).cwiseAbs().maxCoeff() < 1e-12);

  // Whitened training data has unit covariance.
  Matrix zd = w.forward(diag41_data());
  Matrix cov = zd.transpose() * zd / 4.0;
  REQUIRE((cov - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("whitening flags exactly singular data unless told to discard") {
  Rng rng(5);
  // 3-D data confined to a 2-D plane: third column is a fixed combination.
  Matrix t = rng.normal_matrix(50, 2);
  Matrix data(50, 3);
  data.col(0) = t.col(0);
  data.col(1) = t.col(1);
  data.col(2) = 0.5 * t.col(0) - 0.25 * t.col(1);
  REQUIRE_THROWS_AS(fit_whitening(data, 0), DegenerateDataError);

  WhiteningLayer w = fit_whitening(data, 1);
  REQUIRE(w.z_width() == 2);
  // Latent side: inverse then forward is the exact identity.
  Matrix z = rng.normal_matrix(10, 2);
  REQUIRE((w.forward(w.inverse(z)) - z).cwiseAbs().maxCoeff() < 1e-10);
  // x side: forward then inverse projects onto the data plane, idempotently.
  Matrix x = rng.normal_matrix(10, 3);
  Matrix proj = w.inverse(w.forward(x));
  Matrix proj2 = w.inverse(w.forward(proj));
  REQUIRE((proj2 - proj).cwiseAbs().maxCoeff() < 1e-10);
  // Points already on the plane are fixed points of the projection.
  Matrix on_plane = w.inverse(z);
  REQUIRE((w.inverse(w.forward(on_plane)) - on_plane).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("whitening rejects out-of-range discard counts and tiny datasets") {
  Matrix d = diag41_data();
  REQUIRE_THROWS_AS(fit_whitening(d, -1), ConfigError);
  REQUIRE_THROWS_AS(fit_whitening(d, 2), ConfigError);
  REQUIRE_THROWS_AS(fit_whitening(d.topRows(1)), DegenerateDataError);
}

TEST_CASE("whitening in front of couplings shifts the log-determinant by a constant") {
  Rng rng(41);
  Matrix data = rng.normal_matrix(200, 2);
  data.col(0) *= 3.0;
  data.rowwise() += Eigen::RowVector2d(1.0, -2.0);
  FlowStack plain = small_flow("R2", 2, nullptr, 0.4, rng);
  FlowStack with_w = plain;
  with_w.layers.insert(with_w.layers.begin(), fit_whitening(data));
  with_w.validate();

  const WhiteningLayer& w = std::get<WhiteningLayer>(with_w.layers.front());
  Matrix x = rng.normal_matrix(6, 2);
  XZEval a = flow_forward_xz(with_w, x, false);
  XZEval b = flow_forward_xz(plain, w.forward(x), false);
  REQUIRE((a.z - b.z).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((a.logdet - b.logdet).cwiseAbs().maxCoeff() ==
          Catch::Approx(std::abs(w.logdet_xz())).margin(1e-12));
}

TEST_CASE("parameter vector covers exactly the coupling layers") {
  Rng rng(43);
  Matrix data = rng.normal_matrix(100, 4);
  FlowConfig cfg;
  cfg.architecture = "W R2";
  cfg.hidden_layers = 1;
  cfg.hidden_width = 8;
  FlowStack f = build_flow(cfg, 4, &data, rng);
  Eigen::Index expect = 0;
  for (const auto& l : f.layers)
    if (const auto* c = std::get_if<CouplingLayer>(&l)) expect += c->parameter_count();
  REQUIRE(f.parameter_count() == expect);

  Vector p = rng.normal_vector(expect);
  f.set_parameters(p);
  REQUIRE((f.parameters() - p).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE_THROWS_AS(f.set_parameters(Vector::Zero(expect + 1)), ContractError);
}

TEST_CASE("a stack with no layers acts as the identity map") {
  FlowStack f;
  Rng rng(3);
  Matrix x = rng.normal_matrix(4, 3);
  XZEval fwd = flow_forward_xz(f, x, false);
  REQUIRE((fwd.z - x).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(fwd.logdet.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(f.parameter_count() == 0);
  REQUIRE_THROWS_AS(f.validate(), ContractError);
}

TEST_CASE("architecture grammar rejects malformed strings") {
  Rng rng(7);
  Matrix data = rng.normal_matrix(50, 4);
  FlowConfig cfg;
  cfg.hidden_layers = 1;
  cfg.hidden_width = 4;

  cfg.architecture = "X2";
  REQUIRE_THROWS_AS(build_flow(cfg, 4, &data, rng), ConfigError);
  cfg.architecture = "R0";
  REQUIRE_THROWS_AS(build_flow(cfg, 4, &data, rng), ConfigError);
  cfg.architecture = "Rx";
  REQUIRE_THROWS_AS(build_flow(cfg, 4, &data, rng), ConfigError);
  cfg.architecture = "";
  REQUIRE_THROWS_AS(build_flow(cfg, 4, &data, rng), ConfigError);
  cfg.architecture = "R2 W";  // coordinate layer not first
  REQUIRE_THROWS_AS(build_flow(cfg, 4, &data, rng), ConfigError);
  cfg.architecture = "W R2";
  REQUIRE_THROWS_AS(build_flow(cfg, 4, nullptr, rng), ConfigError);  // needs data
  REQUIRE_NOTHROW(build_flow(cfg, 4, &data, rng));
  cfg.architecture = "R1";
  REQUIRE_THROWS_AS(build_flow(cfg, 1, nullptr, rng), ConfigError);  // width < 2
}

TEST_CASE("forward log-determinant matches the numeric jacobian") {
  Rng rng(51);
  FlowStack f = small_flow("R2", 2, nullptr, 0.4, rng);
  for (int t = 0; t < 5; ++t) {
    Vector x0 = rng.normal_vector(2);
    Matrix x(1, 2);
    x.row(0) = x0.transpose();
    XZEval fwd = flow_forward_xz(f, x, false);
    const double numeric = log_abs_det(numeric_jacobian_xz(f, x0));
    REQUIRE(fwd.logdet[0] == Catch::Approx(numeric).margin(1e-6));
  }
}

TEST_CASE("backward pass through both directions matches finite differences") {
  Rng rng(61);
  FlowStack f = small_flow("R2", 2, nullptr, 0.3, rng);
  Matrix x = rng.normal_matrix(6, 2);
  Matrix z = rng.normal_matrix(6, 2);

  // L = sum(z) + sum(logdet) through the x -> z pass.
  {
    XZEval ev = flow_forward_xz(f, x, true);
    Vector grad = Vector::Zero(f.parameter_count());
    flow_backward_xz(f, ev, Matrix::Ones(6, 2), Vector::Ones(6), grad);
    Vector fd = fd_parameter_gradient(f, [&]() {
      XZEval e = flow_forward_xz(f, x, false);
      return e.z.sum() + e.logdet.sum();
    });
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    REQUIRE((fd - grad).cwiseAbs().maxCoeff() / scale < 1e-5);
  }
  // L = sum(x) + sum(logdet) through the z -> x pass.
  {
    ZXEval ev = flow_inverse_zx(f, z, true);
    Vector grad = Vector::Zero(f.parameter_count());
    flow_backward_zx(f, ev, Matrix::Ones(6, 2), Vector::Ones(6), grad);
    Vector fd = fd_parameter_gradient(f, [&]() {
      ZXEval e = flow_inverse_zx(f, z, false);
      return e.x.sum() + e.logdet.sum();
    });
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    REQUIRE((fd - grad).cwiseAbs().maxCoeff() / scale < 1e-5);
  }
}

TEST_CASE("pushforward density matches a binned monte carlo histogram") {
  Rng rng(71);
  // Mild parameters keep the pushforward density smooth enough for midpoint
  // quadrature; sharper maps are covered by the exact-Jacobian tests.
  FlowStack f = small_flow("R2", 2, nullptr, 0.15, rng);

  const int n = 100000;
  Matrix z = rng.normal_matrix(n, 2);
  ZXEval inv = flow_inverse_zx(f, z, false);

  // 8 x 8 bins over [-3, 3]^2; expected mass per bin from the change of
  // variables p_X(x) = p_Z(F_xz(x)) exp(log R_xz(x)), midpoint quadrature on a
  // 6 x 6 subgrid per bin.
  const int nb = 8, sub = 24;
  const double lo = -3.0, hi = 3.0, w = (hi - lo) / nb;
  Matrix counts = Matrix::Zero(nb, nb);
  for (int i = 0; i < n; ++i) {
    const double px = inv.x(i, 0), py = inv.x(i, 1);
    if (px < lo || px >= hi || py < lo || py >= hi) continue;
    counts(static_cast<int>((px - lo) / w), static_cast<int>((py - lo) / w)) += 1.0;
  }

  Matrix quad(nb * nb * sub * sub, 2);
  Eigen::Index r = 0;
  for (int bi = 0; bi < nb; ++bi)
    for (int bj = 0; bj < nb; ++bj)
      for (int si = 0; si < sub; ++si)
        for (int sj = 0; sj < sub; ++sj) {
          quad(r, 0) = lo + (bi + (si + 0.5) / sub) * w;
          quad(r, 1) = lo + (bj + (sj + 0.5) / sub) * w;
          ++r;
        }
  XZEval fwd = flow_forward_xz(f, quad, false);
  const double cell = (w / sub) * (w / sub);
  r = 0;
  int tested = 0;
  for (int bi = 0; bi < nb; ++bi)
    for (int bj = 0; bj < nb; ++bj) {
      double mass = 0.0;
      for (int s = 0; s < sub * sub; ++s, ++r) {
        const double lpz = -0.5 * fwd.z.row(r).squaredNorm() - std::log(2.0 * M_PI);
        mass += std::exp(lpz + fwd.logdet[r]) * cell;
      }
      const double mu = n * mass;
      if (mu < 100.0) continue;  // skip bins too empty for a gaussian count bound
      ++tested;
      const double sigma = std::sqrt(mu);
      // 4 sigma plus 2% headroom for midpoint quadrature bias
      REQUIRE(std::abs(counts(bi, bj) - mu) <= 4.0 * sigma + 0.02 * mu);
    }
  REQUIRE(tested >= 8);
}
