#include "bidomain/unfolding.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace bidomain {

namespace {

double cell_volume(const TiledDomain& dom) { return std::pow(dom.eps, dom.dim); }

}  // namespace

UnfoldedField unfold_boundary(const Field& v, const TiledDomain& dom) {
  require_space(v, FieldSpace::Membrane, "unfold_boundary");
  if (v.size() != dom.membrane_dof_count()) throw ConfigError("unfold_boundary: DOF map mismatch");
  UnfoldedField out;
  out.target = UnfoldedField::Target::BoundaryGamma;
  out.eps = dom.eps;
  out.cells = dom.cells();
  out.points_per_cell = dom.cell->membrane_point_count();
  out.values.resize(static_cast<std::size_t>(out.cells * out.points_per_cell));
  const auto& positions = dom.cell->membrane_positions;
  for (Index k = 0; k < out.cells; ++k)
    for (Index p = 0; p < out.points_per_cell; ++p) {
      const Index node = dom.global_node(k, positions[static_cast<std::size_t>(p)]);
      const auto mdof = dom.node_membrane[static_cast<std::size_t>(node)];
      out.at(k, p) = v.values[static_cast<std::size_t>(mdof)];
    }
  return out;
}

UnfoldedField unfold_volume(const Field& u, const TiledDomain& dom, Phase phase) {
  const FieldSpace expect = phase == Phase::Intra ? FieldSpace::PhaseI : FieldSpace::PhaseE;
  require_space(u, expect, "unfold_volume");
  const int pi = static_cast<int>(phase);
  if (u.size() != dom.ndof[pi]) throw ConfigError("unfold_volume: DOF map mismatch");
  UnfoldedField out;
  out.target = phase == Phase::Intra ? UnfoldedField::Target::VolumeIntra : UnfoldedField::Target::VolumeExtra;
  out.eps = dom.eps;
  out.cells = dom.cells();
  out.points_per_cell = dom.cell->phase_point_count(phase);
  out.values.resize(static_cast<std::size_t>(out.cells * out.points_per_cell));
  const auto& positions = dom.cell->phase_positions[pi];
  for (Index k = 0; k < out.cells; ++k)
    for (Index p = 0; p < out.points_per_cell; ++p) {
      const Index node = dom.global_node(k, positions[static_cast<std::size_t>(p)]);
      const auto dof = dom.node_dof[pi][static_cast<std::size_t>(node)];
      out.at(k, p) = u.values[static_cast<std::size_t>(dof)];
    }
  return out;
}

UnfoldedField restrict_to_membrane(const UnfoldedField& f, const TiledDomain& dom, Phase phase) {
  if (f.target == UnfoldedField::Target::BoundaryGamma)
    throw ConfigError("restrict_to_membrane: field already lives on the membrane");
  const int pi = static_cast<int>(phase);
  const auto& cell = *dom.cell;
  UnfoldedField out;
  out.target = UnfoldedField::Target::BoundaryGamma;
  out.eps = f.eps;
  out.cells = f.cells;
  out.points_per_cell = cell.membrane_point_count();
  out.values.resize(static_cast<std::size_t>(out.cells * out.points_per_cell));
  for (Index p = 0; p < out.points_per_cell; ++p) {
    const auto& pos = cell.membrane_positions[static_cast<std::size_t>(p)];
    const auto src = cell.position_to_phase[pi][static_cast<std::size_t>(cell.closed_lattice_index(pos))];
    if (src < 0) throw ConfigError("restrict_to_membrane: membrane point missing from the phase sample set");
    for (Index k = 0; k < out.cells; ++k) out.at(k, p) = f.at(k, src);
  }
  return out;
}

double unfolded_l2(const UnfoldedField& f, const TiledDomain& dom) {
  const double vol = cell_volume(dom);
  double acc = 0.0;
  if (f.target == UnfoldedField::Target::BoundaryGamma) {
    const SurfaceMesh surf = unit_surface_mesh(*dom.cell);
    std::vector<double> slice(static_cast<std::size_t>(f.points_per_cell));
    for (Index k = 0; k < f.cells; ++k) {
      std::copy(f.values.begin() + k * f.points_per_cell, f.values.begin() + (k + 1) * f.points_per_cell,
                slice.begin());
      const double nrm = l2_surface_norm(surf, slice);
      acc += vol * nrm * nrm;
    }
  } else {
    const Phase p = f.target == UnfoldedField::Target::VolumeIntra ? Phase::Intra : Phase::Extra;
    const PhaseMesh mesh = unit_closed_phase_mesh(*dom.cell, p);
    std::vector<double> slice(static_cast<std::size_t>(f.points_per_cell));
    for (Index k = 0; k < f.cells; ++k) {
      std::copy(f.values.begin() + k * f.points_per_cell, f.values.begin() + (k + 1) * f.points_per_cell,
                slice.begin());
      const double nrm = l2_volume_norm(mesh, slice);
      acc += vol * nrm * nrm;
    }
  }
  return std::sqrt(acc);
}

double unfolded_h1y(const UnfoldedField& f, const TiledDomain& dom) {
  if (f.target == UnfoldedField::Target::BoundaryGamma)
    throw ConfigError("unfolded_h1y: y-gradient needs a volume-unfolded field");
  const Phase p = f.target == UnfoldedField::Target::VolumeIntra ? Phase::Intra : Phase::Extra;
  const PhaseMesh mesh = unit_closed_phase_mesh(*dom.cell, p);
  const double vol = cell_volume(dom);
  double acc = 0.0;
  std::vector<double> slice(static_cast<std::size_t>(f.points_per_cell));
  for (Index k = 0; k < f.cells; ++k) {
    std::copy(f.values.begin() + k * f.points_per_cell, f.values.begin() + (k + 1) * f.points_per_cell,
              slice.begin());
    const double s = h1_seminorm(mesh, slice);
    acc += vol * s * s;
  }
  return std::sqrt(acc);
}

double unfolded_h12_gagliardo(const UnfoldedField& f, const TiledDomain& dom, Index max_pair_evaluations) {
  if (f.target != UnfoldedField::Target::BoundaryGamma)
    throw ConfigError("unfolded_h12_gagliardo: defined for membrane-unfolded fields");
  const auto& cell = *dom.cell;
  const Index nf = static_cast<Index>(cell.faces.size());
  const Index pairs = nf * nf * f.cells;
  if (pairs > max_pair_evaluations) {
    std::ostringstream os;
    os << "H^{1/2} double sum refused: " << pairs << " pair evaluations exceed the budget of "
       << max_pair_evaluations;
    throw ConfigError(os.str());
  }

  const int d = cell.dim;
  const double h = cell.h();
  const double area = std::pow(h, d - 1);
  // Face midpoints and midpoint values (mean of corners).
  std::vector<Point> mid(static_cast<std::size_t>(nf));
  for (Index i = 0; i < nf; ++i) {
    const auto& face = cell.faces[static_cast<std::size_t>(i)];
    Point m{0, 0, 0};
    for (int q = 0; q < face.corner_count; ++q)
      for (int a = 0; a < 3; ++a) m[static_cast<std::size_t>(a)] += face.corners[static_cast<std::size_t>(q)][static_cast<std::size_t>(a)] * h / face.corner_count;
    mid[static_cast<std::size_t>(i)] = m;
  }
  std::vector<std::vector<std::int32_t>> face_points(static_cast<std::size_t>(nf));
  for (Index i = 0; i < nf; ++i) {
    const auto& face = cell.faces[static_cast<std::size_t>(i)];
    for (int q = 0; q < face.corner_count; ++q)
      face_points[static_cast<std::size_t>(i)].push_back(
          cell.position_to_membrane[static_cast<std::size_t>(cell.closed_lattice_index(face.corners[static_cast<std::size_t>(q)]))]);
  }

  const double vol = cell_volume(dom);
  double acc = 0.0;
  std::vector<double> fv(static_cast<std::size_t>(nf));
  for (Index k = 0; k < f.cells; ++k) {
    for (Index i = 0; i < nf; ++i) {
      double s = 0.0;
      for (auto p : face_points[static_cast<std::size_t>(i)]) s += f.at(k, p);
      fv[static_cast<std::size_t>(i)] = s / static_cast<double>(face_points[static_cast<std::size_t>(i)].size());
    }
    double cell_acc = 0.0;
    for (Index i = 0; i < nf; ++i)
      for (Index j = 0; j < nf; ++j) {
        if (i == j) continue;
        double dist2 = 0.0;
        for (int a = 0; a < d; ++a) {
          const double dd = mid[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] - mid[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
          dist2 += dd * dd;
        }
        const double diff = fv[static_cast<std::size_t>(i)] - fv[static_cast<std::size_t>(j)];
        cell_acc += area * area * diff * diff / std::pow(dist2, 0.5 * d);
      }
    acc += vol * cell_acc;
  }
  return std::sqrt(acc);
}

double CellAverageInterpolant::operator()(const Point& x) const {
  // Multilinear between cell centers, clamped on the boundary half-cells.
  int base[3] = {0, 0, 0};
  double xi[3] = {0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    const double s = x[static_cast<std::size_t>(a)] / eps - 0.5;
    double fl = std::floor(s);
    if (fl < 0) fl = 0;
    if (fl > N - 2) fl = N > 1 ? N - 2 : 0;
    base[a] = static_cast<int>(fl);
    double t = s - fl;
    if (N == 1) t = 0.0;
    xi[a] = std::min(1.0, std::max(0.0, t));
  }
  double v = 0.0;
  const int nc = 1 << dim;
  for (int q = 0; q < nc; ++q) {
    double wgt = 1.0;
    int idx[3] = {base[0], base[1], base[2]};
    for (int a = 0; a < dim; ++a) {
      const int bit = (q >> a) & 1;
      wgt *= bit ? xi[a] : 1.0 - xi[a];
      idx[a] += bit;
      if (idx[a] > N - 1) idx[a] = N - 1;
    }
    const Index lin = idx[0] + static_cast<Index>(N) * (idx[1] + static_cast<Index>(N) * (dim == 3 ? idx[2] : 0));
    v += wgt * cell_means[static_cast<std::size_t>(lin)];
  }
  return v;
}

CellAverageInterpolant local_average_and_interpolant(const Field& u, const TiledDomain& dom, Phase phase) {
  const UnfoldedField uf = unfold_volume(u, dom, phase);
  const PhaseMesh mesh = unit_closed_phase_mesh(*dom.cell, phase);
  const double volume = dom.cell->volume(phase);
  if (volume <= 0.0) throw ConfigError("local average: empty phase");

  CellAverageInterpolant out;
  out.dim = dom.dim;
  out.N = dom.N;
  out.eps = dom.eps;
  out.cell_means.resize(static_cast<std::size_t>(uf.cells));
  std::vector<double> slice(static_cast<std::size_t>(uf.points_per_cell));
  for (Index k = 0; k < uf.cells; ++k) {
    std::copy(uf.values.begin() + k * uf.points_per_cell, uf.values.begin() + (k + 1) * uf.points_per_cell,
              slice.begin());
    out.cell_means[static_cast<std::size_t>(k)] = integral_volume(mesh, slice) / volume;
  }
  return out;
}

double boundary_unfolding_defect(const TiledDomain& dom, const std::function<double(const Point&)>& v_smooth) {
  // Sample v on the membrane, unfold, and compare against v resolved in x:
  // per cell integral of (T(v)(y) - v(x))^2 over x in the cell, y in Gamma.
  Field v;
  v.space = FieldSpace::Membrane;
  v.values.resize(static_cast<std::size_t>(dom.membrane_dof_count()));
  for (Index md = 0; md < dom.membrane_dof_count(); ++md)
    v.values[static_cast<std::size_t>(md)] = v_smooth(dom.node_position(dom.membrane_nodes[static_cast<std::size_t>(md)]));
  const UnfoldedField tf = unfold_boundary(v, dom);

  const SurfaceMesh surf = unit_surface_mesh(*dom.cell);
  const CsrMatrix M = assemble_surface_mass(surf);
  const double gamma_area = dom.cell->gamma_area;

  const int d = dom.dim;
  const double g2[2] = {0.2113248654051871177454256097490, 0.7886751345948128822545743902510};
  const int npts = 1 << d;
  const double wq = cell_volume(dom) / npts;

  std::vector<double> slice(static_cast<std::size_t>(tf.points_per_cell)), Ms(slice.size());
  double acc = 0.0;
  for (Index k = 0; k < tf.cells; ++k) {
    std::copy(tf.values.begin() + k * tf.points_per_cell, tf.values.begin() + (k + 1) * tf.points_per_cell,
              slice.begin());
    M.multiply(slice.data(), Ms.data());
    double quad = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < slice.size(); ++i) quad += slice[i] * Ms[i];
    {
      std::vector<double> ones(slice.size(), 1.0), Mo(slice.size());
      M.multiply(ones.data(), Mo.data());
      for (std::size_t i = 0; i < slice.size(); ++i) lin += slice[i] * Mo[i];
    }
    const Index kx = k % dom.N, ky = (k / dom.N) % dom.N, kz = d == 3 ? k / (static_cast<Index>(dom.N) * dom.N) : 0;
    for (int p = 0; p < npts; ++p) {
      const Point xq{(kx + g2[p & 1]) * dom.eps, (ky + g2[(p >> 1) & 1]) * dom.eps,
                     d == 3 ? (kz + g2[(p >> 2) & 1]) * dom.eps : 0.0};
      const double c = v_smooth(xq);
      acc += wq * (quad - 2.0 * c * lin + c * c * gamma_area);
    }
  }
  return std::sqrt(std::max(0.0, acc));
}

UnfoldIdentityReport run_unfold_identity_suite(const std::shared_ptr<const UnitCell>& cell,
                                               const std::vector<int>& tilings, unsigned seed) {
  UnfoldIdentityReport rep;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1, 1);

  for (int N : tilings) {
    const TiledDomain dom = tile_domain(cell, N);
    const SurfaceMesh gsurf = surface_mesh(dom);

    Field v1, v2;
    v1.space = v2.space = FieldSpace::Membrane;
    v1.values.resize(static_cast<std::size_t>(dom.membrane_dof_count()));
    v2.values.resize(v1.values.size());
    for (auto& x : v1.values) x = dist(rng);
    for (auto& x : v2.values) x = dist(rng);

    // Integration formula: eps * integral over Gamma_eps = integral over Omega x Gamma.
    const UnfoldedField t1 = unfold_boundary(v1, dom);
    {
      const double lhs = dom.eps * integral_surface(gsurf, v1.values);
      const SurfaceMesh usurf = unit_surface_mesh(*dom.cell);
      double rhs = 0.0;
      std::vector<double> slice(static_cast<std::size_t>(t1.points_per_cell));
      for (Index k = 0; k < t1.cells; ++k) {
        std::copy(t1.values.begin() + k * t1.points_per_cell, t1.values.begin() + (k + 1) * t1.points_per_cell,
                  slice.begin());
        rhs += std::pow(dom.eps, dom.dim) * integral_surface(usurf, slice);
      }
      rep.integration_formula_defect =
          std::max(rep.integration_formula_defect, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }

    // Norm identity.
    {
      const double lhs = unfolded_l2(t1, dom);
      const double rhs = std::sqrt(dom.eps) * l2_surface_norm(gsurf, v1.values);
      rep.boundary_norm_defect =
          std::max(rep.boundary_norm_defect, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }

    // Product rule (pointwise, exact).
    {
      Field prod;
      prod.space = FieldSpace::Membrane;
      prod.values.resize(v1.values.size());
      for (std::size_t i = 0; i < prod.values.size(); ++i) prod.values[i] = v1.values[i] * v2.values[i];
      const UnfoldedField tp = unfold_boundary(prod, dom);
      const UnfoldedField t2 = unfold_boundary(v2, dom);
      double defect = 0.0;
      for (std::size_t i = 0; i < tp.values.size(); ++i)
        defect = std::max(defect, std::abs(tp.values[i] - t1.values[i] * t2.values[i]));
      rep.product_rule_defect = std::max(rep.product_rule_defect, defect);
    }

    // Volume identities per phase.
    for (Phase p : {Phase::Intra, Phase::Extra}) {
      const int pi = static_cast<int>(p);
      Field u;
      u.space = p == Phase::Intra ? FieldSpace::PhaseI : FieldSpace::PhaseE;
      u.values.resize(static_cast<std::size_t>(dom.ndof[pi]));
      for (auto& x : u.values) x = dist(rng);
      const UnfoldedField tu = unfold_volume(u, dom, p);
      const PhaseMesh gmesh = phase_mesh(dom, p);

      const double l2_defect = std::abs(unfolded_l2(tu, dom) - l2_volume_norm(gmesh, u.values));
      rep.volume_norm_defect =
          std::max(rep.volume_norm_defect, l2_defect / std::max(1.0, l2_volume_norm(gmesh, u.values)));

      const double lhs = unfolded_h1y(tu, dom);
      const double rhs = dom.eps * h1_seminorm(gmesh, u.values);
      rep.gradient_scaling_defect =
          std::max(rep.gradient_scaling_defect, std::abs(lhs - rhs) / std::max(1.0, rhs));

      // Trace compatibility: restrict then compare with the unfolded trace.
      Field trace;
      trace.space = FieldSpace::Membrane;
      trace.values = gather_trace(dom, u.values, p);
      const UnfoldedField tb = unfold_boundary(trace, dom);
      const UnfoldedField tr = restrict_to_membrane(tu, dom, p);
      double defect = 0.0;
      for (std::size_t i = 0; i < tb.values.size(); ++i)
        defect = std::max(defect, std::abs(tb.values[i] - tr.values[i]));
      rep.trace_compatibility_defect = std::max(rep.trace_compatibility_defect, defect);
    }
  }

  rep.passed = rep.integration_formula_defect <= rep.tolerance && rep.boundary_norm_defect <= rep.tolerance &&
               rep.product_rule_defect <= rep.tolerance && rep.gradient_scaling_defect <= rep.tolerance &&
               rep.trace_compatibility_defect <= rep.tolerance && rep.volume_norm_defect <= rep.tolerance;
  return rep;
}

}  // namespace bidomain
