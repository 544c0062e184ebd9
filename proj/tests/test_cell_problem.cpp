#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bidomain/cell_problem.hpp"

using namespace bidomain;

namespace {

CellTensorSampler identity2 = [](const Point&) { return SymTensor::identity(2); };

CellGeometrySpec laminate(double a = 0.5, int n = 8, int dim = 2) {
  CellGeometrySpec s;
  s.kind = CellKind::Laminate;
  s.dim = dim;
  s.resolution = n;
  s.thickness = a;
  s.axis = 0;
  return s;
}

CellGeometrySpec inclusion(int n = 8, int dim = 2) {
  CellGeometrySpec s;
  s.kind = CellKind::Inclusion;
  s.dim = dim;
  s.resolution = n;
  s.half_width = 0.25;
  return s;
}

CellGeometrySpec bridged(int n = 8, int dim = 2) {
  CellGeometrySpec s;
  s.kind = CellKind::BridgedInclusion;
  s.dim = dim;
  s.resolution = n;
  s.half_width = 0.25;
  s.bridge_half_width = 0.125;
  return s;
}

}  // namespace

TEST_CASE("laminate corrector matches the closed form") {
  const UnitCell cell = build_unit_cell(laminate());
  SolveOptions opts;
  opts.tolerance = 1e-13;

  SUBCASE("normal direction: chi = y1 - 1/4, affine hence exact") {
    const CorrectorField chi = solve_corrector(cell, Phase::Intra, identity2, 0, opts);
    CHECK(chi.report.converged);
    CHECK(chi.report.relative_residual <= 1e-10);
    const int n = cell.n;
    // Walk the periodic lattice; intracellular nodes sit at x-index 0..n/2.
    for (int y = 0; y < n; ++y)
      for (int x = 0; x <= n / 2; ++x) {
        const auto dof = cell.periodic_node_dof[0][static_cast<std::size_t>(cell.periodic_lattice_index(x, y, 0))];
        if (dof < 0) continue;
        const double expect = static_cast<double>(x) / n - 0.25;
        CHECK(chi.values[static_cast<std::size_t>(dof)] == doctest::Approx(expect).epsilon(1e-9));
      }
  }
  SUBCASE("tangential direction: chi = 0") {
    const CorrectorField chi = solve_corrector(cell, Phase::Intra, identity2, 1, opts);
    for (double v : chi.values) CHECK(std::abs(v) < 1e-11);
  }
}

TEST_CASE("corrector is mean-zero per component") {
  const UnitCell cell = build_unit_cell(inclusion());
  const CorrectorField chi = solve_corrector(cell, Phase::Intra, identity2, 0);
  const PhaseMesh mesh = periodic_phase_mesh(cell, Phase::Intra);
  CHECK(std::abs(integral_volume(mesh, chi.values)) < 1e-12);
}

TEST_CASE("full cell: zero corrector, tensor equals sigma") {
  // All-intra cell built straight from labels.
  const UnitCell cell = build_unit_cell_from_labels(2, 8, std::vector<std::uint8_t>(64, 0));
  CHECK(cell.volume_i == 1.0);
  CHECK(cell.faces.empty());

  const CorrectorField chi = solve_corrector(cell, Phase::Intra, identity2, 0);
  for (double v : chi.values) CHECK(std::abs(v) < 1e-12);

  SymTensor aniso;
  aniso.dim = 2;
  aniso(0, 0) = 2.0;
  aniso(1, 1) = 3.0;
  aniso(0, 1) = aniso(1, 0) = 0.5;
  const CellTensorSampler sig = [aniso](const Point&) { return aniso; };
  // The extracellular phase is empty here; solve intra only.
  const CorrectorField chi2 = solve_corrector(cell, Phase::Intra, sig, 1);
  for (double v : chi2.values) CHECK(std::abs(v) < 1e-12);

  const UnitCell lam = build_unit_cell(laminate());
  const EffectiveTensor t = effective_tensor(lam, identity2, identity2);
  const TensorDiagnostics d = tensor_diagnostics(t, lam, Phase::Intra);
  CHECK(d.symmetry_defect <= 1e-10);
}

TEST_CASE("full-cell identity eigenvalues via a two-phase checkerboard-free cell") {
  // Laminate with sigma=I on each full slab: tangential eigenvalue equals the
  // slab volume, normal eigenvalue is zero.
  const UnitCell cell = build_unit_cell(laminate(0.25));
  const EffectiveTensor t = effective_tensor(cell, identity2, identity2);
  CHECK(std::abs(t.M[0](0, 0)) <= 1e-9);
  CHECK(t.M[0](1, 1) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(t.M[1](1, 1) == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("laminate effective tensors: diag(0, a) and diag(0, 1-a)") {
  const UnitCell cell = build_unit_cell(laminate(0.5));
  const EffectiveTensor t = effective_tensor(cell, identity2, identity2);
  CHECK(std::abs(t.M[0](0, 0)) <= 1e-9);
  CHECK(t.M[0](1, 1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs(t.M[0](0, 1)) <= 1e-9);
  CHECK(std::abs(t.M[0](1, 0)) <= 1e-9);
  CHECK(std::abs(t.M[1](0, 0)) <= 1e-9);
  CHECK(t.M[1](1, 1) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("isolated inclusion: intracellular tensor vanishes") {
  const UnitCell cell = build_unit_cell(inclusion());
  const EffectiveTensor t = effective_tensor(cell, identity2, identity2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(t.M[0](i, j)) <= 1e-9);
  // Extracellular tensor is PD and obeys the Voigt bound.
  const TensorDiagnostics d = tensor_diagnostics(t, cell, Phase::Extra);
  CHECK(d.positive_definite);
  CHECK(d.expected_positive_definite);
  CHECK(d.voigt_slack_min >= -1e-10);
  CHECK(d.eigenvalues[1] <= cell.volume_e + 1e-10);
}

TEST_CASE("laminate diagnostics: zero eigenvalue flagged, consistent with spanning") {
  const UnitCell cell = build_unit_cell(laminate());
  const EffectiveTensor t = effective_tensor(cell, identity2, identity2);
  const TensorDiagnostics d = tensor_diagnostics(t, cell, Phase::Intra);
  CHECK(std::abs(d.eigenvalues[0]) <= 1e-10);
  CHECK_FALSE(d.positive_definite);
  CHECK_FALSE(d.expected_positive_definite);
  CHECK(d.symmetry_defect <= 1e-10);
}

TEST_CASE("refinement stability of the effective tensors") {
  SUBCASE("laminate: both correctors affine, tensors resolution-independent") {
    const EffectiveTensor a = effective_tensor(build_unit_cell(laminate(0.5, 8)), identity2, identity2);
    const EffectiveTensor b = effective_tensor(build_unit_cell(laminate(0.5, 16)), identity2, identity2);
    for (int p = 0; p < 2; ++p)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(std::abs(a.M[p](i, j) - b.M[p](i, j)) < 1e-9);
  }
  SUBCASE("inclusion: intracellular tensor exact, extracellular within the 2% band") {
    const EffectiveTensor a = effective_tensor(build_unit_cell(inclusion(8)), identity2, identity2);
    const EffectiveTensor b = effective_tensor(build_unit_cell(inclusion(16)), identity2, identity2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(a.M[0](i, j) - b.M[0](i, j)) < 1e-9);
        const double scale = std::max({std::abs(a.M[1](i, j)), std::abs(b.M[1](i, j)), 1e-6});
        CHECK(std::abs(a.M[1](i, j) - b.M[1](i, j)) / scale < 0.02);
      }
  }
  SUBCASE("bridged tensor settles under refinement") {
    const EffectiveTensor t16 = effective_tensor(build_unit_cell(bridged(16)), identity2, identity2);
    const EffectiveTensor t32 = effective_tensor(build_unit_cell(bridged(32)), identity2, identity2);
    for (int p = 0; p < 2; ++p)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const double a = t16.M[p](i, j), b = t32.M[p](i, j);
          const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
          CHECK(std::abs(a - b) / scale < 0.02);
        }
  }
}

TEST_CASE("bridged 2d extracellular pockets yield a vanishing tensor") {
  // Bridges along both axes disconnect the extracellular phase in 2D; its
  // effective conductivity must vanish.
  const UnitCell cell = build_unit_cell(bridged());
  const auto rep = phase_connectivity(cell, Phase::Extra);
  CHECK_FALSE(rep.spans_axis[0]);
  CHECK_FALSE(rep.spans_axis[1]);
  const EffectiveTensor t = effective_tensor(cell, identity2, identity2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(t.M[1](i, j)) <= 1e-9);
}

TEST_CASE("separable x-dependence scales the tensor exactly") {
  const UnitCell cell = build_unit_cell(bridged());
  TensorField sig = [](const Point& x, const Point&) {
    const double s = 1.0 + x[0];  // s(x) * Identity(y)
    return SymTensor::scaled_identity(2, s);
  };
  SolveOptions opts;
  opts.tolerance = 1e-13;
  const EffectiveTensor a = effective_tensor_at(cell, sig, sig, {0.0, 0, 0}, opts);
  const EffectiveTensor b = effective_tensor_at(cell, sig, sig, {1.0, 0, 0}, opts);
  for (int p = 0; p < 2; ++p)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(b.M[p](i, j) == doctest::Approx(2.0 * a.M[p](i, j)).epsilon(1e-9));
}

TEST_CASE("3d laminate tensor") {
  const UnitCell cell = build_unit_cell(laminate(0.5, 4, 3));
  const CellTensorSampler id3 = [](const Point&) { return SymTensor::identity(3); };
  const EffectiveTensor t = effective_tensor(cell, id3, id3);
  CHECK(std::abs(t.M[0](0, 0)) <= 1e-9);
  CHECK(t.M[0](1, 1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(t.M[0](2, 2) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("threaded and serial tensors agree bitwise") {
  const UnitCell cell = build_unit_cell(bridged());
  const EffectiveTensor serial = effective_tensor(cell, identity2, identity2, {}, 1);
  const EffectiveTensor threaded = effective_tensor(cell, identity2, identity2, {}, 4);
  for (int p = 0; p < 2; ++p)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(serial.M[p](i, j) == threaded.M[p](i, j));
}
