#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bidomain/unfolding.hpp"

using namespace bidomain;

namespace {

std::shared_ptr<const UnitCell> make_inclusion(int n = 8) {
  CellGeometrySpec s;
  s.kind = CellKind::Inclusion;
  s.dim = 2;
  s.resolution = n;
  s.half_width = 0.25;
  return std::make_shared<const UnitCell>(build_unit_cell(s));
}

std::shared_ptr<const UnitCell> make_laminate(int n = 8) {
  CellGeometrySpec s;
  s.kind = CellKind::Laminate;
  s.dim = 2;
  s.resolution = n;
  s.thickness = 0.5;
  s.axis = 0;
  return std::make_shared<const UnitCell>(build_unit_cell(s));
}

Field random_membrane_field(const TiledDomain& dom, unsigned seed) {
  Field v;
  v.space = FieldSpace::Membrane;
  v.values.resize(static_cast<std::size_t>(dom.membrane_dof_count()));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (auto& x : v.values) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("constant membrane field unfolds to the same constant") {
  const TiledDomain dom = tile_domain(make_inclusion(), 2);
  Field v;
  v.space = FieldSpace::Membrane;
  v.values.assign(static_cast<std::size_t>(dom.membrane_dof_count()), 2.5);
  const UnfoldedField t = unfold_boundary(v, dom);
  for (double x : t.values) CHECK(x == 2.5);
  CHECK(t.points_per_cell == dom.cell->membrane_point_count());
  CHECK(static_cast<Index>(t.values.size()) == dom.cells() * t.points_per_cell);
  // Constant: L2 equals |c| sqrt(|Omega| |Gamma|); H12 seminorm vanishes.
  CHECK(unfolded_l2(t, dom) == doctest::Approx(2.5 * std::sqrt(dom.cell->gamma_area)).epsilon(1e-13));
  CHECK(unfolded_h12_gagliardo(t, dom) == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("periodic sample unfolds independently of the cell index") {
  auto cell = make_inclusion();
  for (int N : {2, 4}) {
    const TiledDomain dom = tile_domain(cell, N);
    // psi defined on the reference membrane points, periodic by construction.
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> dist(-1, 1);
    std::vector<double> psi(static_cast<std::size_t>(cell->membrane_point_count()));
    for (auto& x : psi) x = dist(rng);

    Field v;
    v.space = FieldSpace::Membrane;
    v.values.resize(static_cast<std::size_t>(dom.membrane_dof_count()));
    for (Index k = 0; k < dom.cells(); ++k)
      for (Index p = 0; p < cell->membrane_point_count(); ++p) {
        const Index node = dom.global_node(k, cell->membrane_positions[static_cast<std::size_t>(p)]);
        v.values[static_cast<std::size_t>(dom.node_membrane[static_cast<std::size_t>(node)])] =
            psi[static_cast<std::size_t>(p)];
      }
    const UnfoldedField t = unfold_boundary(v, dom);
    for (Index k = 0; k < t.cells; ++k)
      for (Index p = 0; p < t.points_per_cell; ++p) CHECK(t.at(k, p) == psi[static_cast<std::size_t>(p)]);

    // y-periodic sample: unfolded L2 equals the reference-cell surface norm,
    // independent of eps.
    const SurfaceMesh usurf = unit_surface_mesh(*cell);
    CHECK(unfolded_l2(t, dom) == doctest::Approx(l2_surface_norm(usurf, psi)).epsilon(1e-13));
  }
}

TEST_CASE("identity suite passes at 1e-12 on inclusion and laminate") {
  for (auto cell : {make_inclusion(), make_laminate()}) {
    const auto rep = run_unfold_identity_suite(cell, {2, 4, 8});
    CAPTURE(rep.integration_formula_defect);
    CAPTURE(rep.boundary_norm_defect);
    CAPTURE(rep.product_rule_defect);
    CAPTURE(rep.gradient_scaling_defect);
    CAPTURE(rep.trace_compatibility_defect);
    CAPTURE(rep.volume_norm_defect);
    CHECK(rep.passed);
  }
}

TEST_CASE("unfolding is linear") {
  const TiledDomain dom = tile_domain(make_inclusion(), 3);
  const Field a = random_membrane_field(dom, 1);
  const Field b = random_membrane_field(dom, 2);
  Field combo;
  combo.space = FieldSpace::Membrane;
  combo.values.resize(a.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) combo.values[i] = 2.0 * a.values[i] - 3.0 * b.values[i];
  const UnfoldedField ta = unfold_boundary(a, dom);
  const UnfoldedField tb = unfold_boundary(b, dom);
  const UnfoldedField tc = unfold_boundary(combo, dom);
  for (std::size_t i = 0; i < tc.values.size(); ++i)
    CHECK(tc.values[i] == 2.0 * ta.values[i] - 3.0 * tb.values[i]);
}

TEST_CASE("strong-convergence direction: defect decreases for smooth fields") {
  auto cell = make_inclusion();
  auto smooth = [](const Point& x) { return std::cos(2 * M_PI * x[0]) * std::sin(2 * M_PI * x[1]); };
  double prev = 1e300;
  for (int N : {2, 4, 8}) {
    const TiledDomain dom = tile_domain(cell, N);
    const double defect = boundary_unfolding_defect(dom, smooth);
    CHECK(defect < prev);
    prev = defect;
  }
}

TEST_CASE("local averages of an affine field sit at cell centers plus the phase offset") {
  auto cell = make_inclusion();
  const TiledDomain dom = tile_domain(cell, 4);
  for (Phase p : {Phase::Intra, Phase::Extra}) {
    const int pi = static_cast<int>(p);
    Field u;
    u.space = p == Phase::Intra ? FieldSpace::PhaseI : FieldSpace::PhaseE;
    u.values.resize(static_cast<std::size_t>(dom.ndof[pi]));
    // u = x1 sampled at the nodes of the phase.
    for (Index node = 0; node < dom.node_count(); ++node) {
      const auto dof = dom.node_dof[pi][static_cast<std::size_t>(node)];
      if (dof >= 0) u.values[static_cast<std::size_t>(dof)] = dom.node_position(node)[0];
    }
    const auto avg = local_average_and_interpolant(u, dom, p);

    // Direct summation oracle: mean of x1 over the phase part of cell k.
    const PhaseMesh mesh = unit_closed_phase_mesh(*cell, p);
    std::vector<double> y1(static_cast<std::size_t>(mesh.ndof));
    for (std::size_t q = 0; q < cell->phase_positions[pi].size(); ++q)
      y1[q] = cell->phase_positions[pi][q][0] * cell->h();
    const double unit_mean = integral_volume(mesh, y1) / cell->volume(p);
    const double offset = dom.eps * (unit_mean - 0.5);

    for (int kx = 0; kx < dom.N; ++kx) {
      const double center = (kx + 0.5) * dom.eps;
      const Index k = dom.cell_index(kx, 1, 0);
      CHECK(avg.cell_means[static_cast<std::size_t>(k)] == doctest::Approx(center + offset).epsilon(1e-12));
    }

    // The interpolant reproduces the affine trend away from the clamped ring.
    CHECK(avg({0.5, 0.5, 0}) == doctest::Approx(0.5 + offset).epsilon(1e-12));
  }
}

TEST_CASE("interpolation-error ratio stays bounded across eps") {
  auto cell = make_inclusion();
  auto smooth = [](const Point& x) { return std::sin(2 * M_PI * x[0]) * std::cos(2 * M_PI * x[1]); };
  std::vector<double> ratios;
  for (int N : {2, 4, 8}) {
    const TiledDomain dom = tile_domain(cell, N);
    const PhaseMesh mesh = phase_mesh(dom, Phase::Extra);
    Field u;
    u.space = FieldSpace::PhaseE;
    u.values.resize(static_cast<std::size_t>(dom.ndof[1]));
    for (Index node = 0; node < dom.node_count(); ++node) {
      const auto dof = dom.node_dof[1][static_cast<std::size_t>(node)];
      if (dof >= 0) u.values[static_cast<std::size_t>(dof)] = smooth(dom.node_position(node));
    }
    const auto q = local_average_and_interpolant(u, dom, Phase::Extra);

    // || Q(u) - u ||_{L2(phase)} via element quadrature.
    double acc = 0.0;
    const double g2[2] = {0.2113248654051871177454256097490, 0.7886751345948128822545743902510};
    for (Index e : mesh.elements) {
      Index c[3];
      mesh.voxel_coords(e, c);
      double corners[4];
      for (int k = 0; k < 4; ++k)
        corners[k] = u.values[static_cast<std::size_t>(mesh.corner_dof(c, k & 1, (k >> 1) & 1, 0))];
      for (int p = 0; p < 4; ++p) {
        const double a = g2[p & 1], b = g2[(p >> 1) & 1];
        const Point xq{(c[0] + a) * mesh.h, (c[1] + b) * mesh.h, 0};
        const double uh = (1 - a) * (1 - b) * corners[0] + a * (1 - b) * corners[1] +
                          (1 - a) * b * corners[2] + a * b * corners[3];
        const double diff = q(xq) - uh;
        acc += 0.25 * mesh.h * mesh.h * diff * diff;
      }
    }
    const double err = std::sqrt(acc);
    const double grad = h1_seminorm(mesh, u.values);
    ratios.push_back(err / (dom.eps * grad));
  }
  for (double r : ratios) {
    CHECK(std::isfinite(r));
    CHECK(r <= 2.0 * ratios.front() + 1e-12);
  }
}

TEST_CASE("H12 double sum refuses oversized surfaces") {
  const TiledDomain dom = tile_domain(make_inclusion(), 4);
  const Field v = random_membrane_field(dom, 5);
  const UnfoldedField t = unfold_boundary(v, dom);
  CHECK_THROWS_WITH_AS(unfolded_h12_gagliardo(t, dom, 10), doctest::Contains("budget"), ConfigError);
}

TEST_CASE("DOF-map mismatches are rejected") {
  const TiledDomain dom = tile_domain(make_inclusion(), 2);
  Field wrong;
  wrong.space = FieldSpace::Membrane;
  wrong.values.assign(3, 0.0);
  CHECK_THROWS_AS(unfold_boundary(wrong, dom), ConfigError);
  Field volume_field;
  volume_field.space = FieldSpace::PhaseI;
  volume_field.values.assign(static_cast<std::size_t>(dom.ndof[0]), 1.0);
  CHECK_THROWS_AS(unfold_boundary(volume_field, dom), ConfigError);
}
