#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "bidomain/macro.hpp"

using namespace bidomain;

namespace {

MacroConfig base_config(Index resolution = 8) {
  MacroConfig cfg;
  cfg.dim = 2;
  cfg.resolution = resolution;
  cfg.tensor_i = [](const Point&) { return SymTensor::identity(2); };
  cfg.tensor_e = [](const Point&) { return SymTensor::scaled_identity(2, 2.0); };
  cfg.gamma_area = 2.0;
  cfg.vol_i = 0.25;
  cfg.vol_e = 0.75;
  cfg.membrane = MembraneModel::classical_fhn();
  cfg.dt = 0.01;
  cfg.T = 0.1;
  return cfg;
}

void scalar_recursion(const MembraneModel& m, double& v, double& w, double dt) {
  w += dt * m.gating(v, w);
  v -= dt * m.current(v, w);
}

double grid_l2_error(const MacroSimulator& sim, const std::vector<double>& u, const TimeSpaceFunc& exact,
                     double t) {
  const PhaseMesh& grid = sim.grid();
  std::vector<double> diff(u.size());
  const Index np = grid.nodes_per_axis;
  for (Index node = 0; node < grid.ndof; ++node) {
    const Point x{static_cast<double>(node % np) * grid.h, static_cast<double>((node / np) % np) * grid.h, 0.0};
    diff[static_cast<std::size_t>(node)] = u[static_cast<std::size_t>(node)] - exact(t, x);
  }
  return l2_volume_norm(grid, diff);
}

}  // namespace

TEST_CASE("zero data is a fixed point") {
  MacroConfig cfg = base_config();
  cfg.membrane = MembraneModel{};
  MacroSimulator sim(cfg);
  MacroState s = sim.init_state();
  sim.step(s);
  for (double x : s.ui) CHECK(x == 0.0);
  for (double x : s.ue) CHECK(x == 0.0);
  for (double x : s.v) CHECK(x == 0.0);
}

TEST_CASE("uniform data follows the scalar recursion through the |Gamma| factor") {
  MacroConfig cfg = base_config();
  cfg.v0 = [](const Point&) { return 0.4; };
  cfg.w0 = [](const Point&) { return 0.05; };
  cfg.dt = 0.01;
  cfg.T = 2.0;
  cfg.snapshot_stride = 200;
  cfg.solver.tolerance = 1e-13;
  const MacroTrajectory traj = run_macro(cfg);
  double v = 0.4, w = 0.05;
  for (int k = 0; k < 200; ++k) scalar_recursion(cfg.membrane, v, w, cfg.dt);
  for (double x : traj.snapshots.back().v) CHECK(x == doctest::Approx(v).epsilon(1e-12));
  for (double x : traj.snapshots.back().w) CHECK(x == doctest::Approx(w).epsilon(1e-12));
}

TEST_CASE("vanishing intracellular tensor: solvable, checked against a dense oracle") {
  MacroConfig cfg = base_config(2);  // 3x3 nodes
  cfg.tensor_i = [](const Point&) { return SymTensor::scaled_identity(2, 0.0); };
  cfg.v0 = [](const Point& x) { return std::cos(M_PI * x[0]); };
  cfg.solver.tolerance = 1e-13;
  MacroSimulator sim(cfg);
  CHECK(sim.intra_tensor_singular());
  MacroState s = sim.init_state();
  MacroState before = s;
  sim.step(s);

  // Dense reconstruction of the step system.
  const Index n = sim.grid().ndof;
  const double c = cfg.gamma_area / cfg.dt;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  {
    std::vector<double> unit(static_cast<std::size_t>(n)), Ai(static_cast<std::size_t>(n)),
        Ae(static_cast<std::size_t>(n)), Mi(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
      std::fill(unit.begin(), unit.end(), 0.0);
      unit[static_cast<std::size_t>(j)] = 1.0;
      sim.stiffness(Phase::Intra).multiply(unit.data(), Ai.data());
      sim.stiffness(Phase::Extra).multiply(unit.data(), Ae.data());
      sim.mass().multiply(unit.data(), Mi.data());
      for (Index i = 0; i < n; ++i) {
        K(i, j) += Ai[static_cast<std::size_t>(i)] + c * Mi[static_cast<std::size_t>(i)];
        K(n + i, j) += -c * Mi[static_cast<std::size_t>(i)];
        K(i, n + j) += -c * Mi[static_cast<std::size_t>(i)];
        K(n + i, n + j) += Ae[static_cast<std::size_t>(i)] + c * Mi[static_cast<std::size_t>(i)];
      }
    }
  }
  // Right side at the first step (w update first, then the ionic term).
  std::vector<double> w = before.w;
  Eigen::VectorXd b(2 * n);
  {
    std::vector<double> mem(static_cast<std::size_t>(n)), Mr(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      double& wi = w[static_cast<std::size_t>(i)];
      const double v = before.v[static_cast<std::size_t>(i)];
      wi += cfg.dt * cfg.membrane.gating(v, wi);
      mem[static_cast<std::size_t>(i)] = c * v - cfg.gamma_area * cfg.membrane.current(v, wi);
    }
    sim.mass().multiply(mem.data(), Mr.data());
    for (Index i = 0; i < n; ++i) {
      b(i) = Mr[static_cast<std::size_t>(i)];
      b(n + i) = -Mr[static_cast<std::size_t>(i)];
    }
  }
  // Pseudo-inverse solve and mean pinning mirror the production path.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * n);
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (es.eigenvalues()(k) > 1e-10) x += es.eigenvectors().col(k) * (es.eigenvectors().col(k).dot(b) / es.eigenvalues()(k));
  const auto lumped = lumped_volume(sim.grid());
  double mean = 0.0;
  for (Index i = 0; i < n; ++i) mean += lumped[static_cast<std::size_t>(i)] * x(n + i);
  for (Index i = 0; i < 2 * n; ++i) x(i) -= mean;

  for (Index i = 0; i < n; ++i) {
    CHECK(s.ui[static_cast<std::size_t>(i)] == doctest::Approx(x(i)).epsilon(1e-8));
    CHECK(s.ue[static_cast<std::size_t>(i)] == doctest::Approx(x(n + i)).epsilon(1e-8));
  }
}

TEST_CASE("manufactured solution: spatial order at least 1.8") {
  auto error_at = [](Index res) {
    ManufacturedCase mc = make_manufactured_case(2, res, 1.25e-4, 0.05);
    mc.config.solver.tolerance = 1e-12;
    MacroSimulator sim(mc.config);
    const MacroTrajectory traj = sim.run();
    return grid_l2_error(sim, traj.snapshots.back().v, mc.exact_v, traj.snapshots.back().t);
  };
  const double e16 = error_at(16);
  const double e32 = error_at(32);
  const double order = std::log2(e16 / e32);
  CAPTURE(e16);
  CAPTURE(e32);
  CHECK(order >= 1.8);
}

TEST_CASE("dt self-convergence at first order") {
  auto final_v = [](double dt) {
    MacroConfig cfg = base_config(8);
    cfg.v0 = [](const Point& x) { return 0.9 * std::cos(M_PI * x[0]) * std::cos(M_PI * x[1]); };
    cfg.dt = dt;
    cfg.T = 0.08;
    cfg.snapshot_stride = static_cast<int>(std::round(cfg.T / dt));
    cfg.solver.tolerance = 1e-12;
    return run_macro(cfg).snapshots.back().v;
  };
  const auto ref = final_v(0.001);
  const auto v1 = final_v(0.008);
  const auto v2 = final_v(0.004);
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    e1 = std::max(e1, std::abs(v1[i] - ref[i]));
    e2 = std::max(e2, std::abs(v2[i] - ref[i]));
  }
  const double ratio = e1 / e2;
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 2.5);
}

TEST_CASE("elliptic constraint residuals") {
  SUBCASE("zero trajectory, zero sources") {
    MacroConfig cfg = base_config();
    cfg.membrane = MembraneModel{};
    MacroSimulator sim(cfg);
    const MacroTrajectory traj = sim.run();
    const MacroResidualReport rep = sim.residuals(traj);
    CHECK(rep.max_relative == 0.0);
    CHECK(rep.raw_constant_mode_defect == 0.0);
  }
  SUBCASE("converged steps stay within 10x the solver tolerance") {
    MacroConfig cfg = base_config();
    cfg.v0 = [](const Point& x) { return std::cos(M_PI * x[0]) * std::cos(M_PI * x[1]); };
    cfg.source_i = [](double, const Point& x) { return std::cos(M_PI * x[0]); };
    cfg.source_e = [](double, const Point& x) { return -0.3 * std::cos(M_PI * x[0]); };
    cfg.solver.tolerance = 1e-11;
    MacroSimulator sim(cfg);
    const MacroTrajectory traj = sim.run();
    const MacroResidualReport rep = sim.residuals(traj);
    CHECK(rep.max_relative <= 10.0 * cfg.solver.tolerance);
  }
  SUBCASE("incompatible raw sources are reported before projection") {
    MacroConfig cfg = base_config();
    cfg.source_i = [](double, const Point&) { return 1.0; };  // |Y_i| * 1 over the cube
    MacroSimulator sim(cfg);
    const MacroTrajectory traj = sim.run();
    const MacroResidualReport rep = sim.residuals(traj);
    CHECK(rep.raw_constant_mode_defect == doctest::Approx(cfg.vol_i).epsilon(1e-12));
    CHECK(rep.max_relative <= 10.0 * cfg.solver.tolerance);  // projection keeps the solve consistent
  }
}

TEST_CASE("surface energy decay without membrane dynamics") {
  MacroConfig cfg = base_config(16);
  cfg.membrane = MembraneModel{};
  cfg.v0 = [](const Point& x) { return std::sin(2 * M_PI * x[0]) * std::cos(M_PI * x[1]); };
  MacroSimulator sim(cfg);
  MacroState s = sim.init_state();
  std::vector<double> Mv(s.v.size());
  auto energy = [&](const MacroState& st) {
    sim.mass().multiply(st.v.data(), Mv.data());
    double e = 0.0;
    for (std::size_t i = 0; i < Mv.size(); ++i) e += st.v[i] * Mv[i];
    return cfg.gamma_area * e;
  };
  double prev = energy(s);
  for (int k = 0; k < 10; ++k) {
    sim.step(s);
    const double cur = energy(s);
    CHECK(cur <= prev * (1 + 1e-13));
    prev = cur;
  }
}

TEST_CASE("tensor guards") {
  SUBCASE("singular extracellular tensor is refused") {
    MacroConfig cfg = base_config();
    cfg.tensor_e = [](const Point&) { return SymTensor::diagonal(2, {1.0, 0.0, 0.0}); };
    CHECK_THROWS_AS(MacroSimulator{cfg}, NumericError);
  }
  SUBCASE("semidefinite intracellular tensor is allowed and flagged") {
    MacroConfig cfg = base_config();
    cfg.tensor_i = [](const Point&) { return SymTensor::diagonal(2, {0.0, 0.5, 0.0}); };
    MacroSimulator sim(cfg);
    CHECK(sim.intra_tensor_singular());
  }
  SUBCASE("negative eigenvalue is always refused") {
    MacroConfig cfg = base_config();
    cfg.tensor_i = [](const Point&) { return SymTensor::diagonal(2, {-0.1, 0.5, 0.0}); };
    CHECK_THROWS_AS(MacroSimulator{cfg}, NumericError);
  }
}

TEST_CASE("algebraic relation and mean pinning hold at snapshots") {
  MacroConfig cfg = base_config();
  cfg.v0 = [](const Point& x) { return std::cos(M_PI * x[1]); };
  MacroSimulator sim(cfg);
  const MacroTrajectory traj = sim.run();
  for (const auto& s : traj.snapshots) {
    for (std::size_t i = 0; i < s.v.size(); ++i) CHECK(s.v[i] == s.ui[i] - s.ue[i]);
    CHECK(std::abs(integral_volume(sim.grid(), s.ue)) < 1e-9);
  }
}
