#include "bidomain/fe.hpp"

#include <cmath>
#include <sstream>

namespace bidomain {

namespace {

constexpr double kGaussA = 0.2113248654051871177454256097490;  // (1 - 1/sqrt(3))/2
constexpr double kGaussB = 0.7886751345948128822545743902510;

struct QuadRule {
  int dim;
  int npts;
  std::array<std::array<double, 3>, 8> xi;
  std::array<double, 8> w;
};

QuadRule tensor_gauss(int dim) {
  QuadRule q;
  q.dim = dim;
  q.npts = 1 << dim;
  const double g[2] = {kGaussA, kGaussB};
  for (int p = 0; p < q.npts; ++p) {
    q.xi[static_cast<std::size_t>(p)] = {g[p & 1], dim >= 2 ? g[(p >> 1) & 1] : 0.0,
                                         dim == 3 ? g[(p >> 2) & 1] : 0.0};
    q.w[static_cast<std::size_t>(p)] = 1.0 / q.npts;
  }
  return q;
}

inline double shape1(int k, double xi) { return k == 0 ? 1.0 - xi : xi; }
inline double dshape1(int k) { return k == 0 ? -1.0 : 1.0; }

// Value and reference gradient of corner shape function k at xi.
inline double shape(int dim, int k, const std::array<double, 3>& xi) {
  double v = shape1(k & 1, xi[0]) * shape1((k >> 1) & 1, xi[1]);
  if (dim == 3) v *= shape1((k >> 2) & 1, xi[2]);
  return v;
}

inline void shape_grad(int dim, int k, const std::array<double, 3>& xi, double g[3]) {
  const int kb[3] = {k & 1, (k >> 1) & 1, (k >> 2) & 1};
  double l[3] = {shape1(kb[0], xi[0]), shape1(kb[1], xi[1]), dim == 3 ? shape1(kb[2], xi[2]) : 1.0};
  for (int a = 0; a < dim; ++a) {
    g[a] = dshape1(kb[a]);
    for (int b = 0; b < dim; ++b)
      if (b != a) g[a] *= l[b];
  }
  if (dim == 2) g[2] = 0.0;
}

void check_ellipticity(const SymTensor& s, const Point& x, EllipticityCheck mode) {
  const int d = s.dim;
  double asym = 0.0, scale = 1e-30;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      asym = std::max(asym, std::abs(s(i, j) - s(j, i)));
      scale = std::max(scale, std::abs(s(i, j)));
    }
  scale = std::max(scale, 1.0);
  const auto eig = sym_eigenvalues(s);
  const bool ok = mode == EllipticityCheck::PositiveDefinite ? eig[0] > 0.0
                                                             : eig[0] >= -1e-12 * scale;
  if (asym > 1e-12 * scale || !ok) {
    std::ostringstream os;
    os << "ellipticity violation: tensor sample at (" << x[0] << ", " << x[1] << ", " << x[2] << ") is "
       << (asym > 1e-12 * scale ? "not symmetric" : "not positive definite");
    throw NumericError(os.str());
  }
}

}  // namespace

PhaseMesh phase_mesh(const TiledDomain& dom, Phase p) {
  PhaseMesh mesh;
  mesh.dim = dom.dim;
  mesh.nvox = dom.m;
  mesh.nodes_per_axis = dom.m + 1;
  mesh.periodic = false;
  mesh.h = dom.h();
  mesh.elements = dom.phase_voxels[static_cast<int>(p)];
  mesh.node_dof = dom.node_dof[static_cast<int>(p)];
  mesh.ndof = dom.ndof[static_cast<int>(p)];
  return mesh;
}

PhaseMesh periodic_phase_mesh(const UnitCell& cell, Phase p) {
  PhaseMesh mesh;
  mesh.dim = cell.dim;
  mesh.nvox = cell.n;
  mesh.nodes_per_axis = cell.n;
  mesh.periodic = true;
  mesh.h = cell.h();
  mesh.elements = cell.phase_voxels[static_cast<int>(p)];
  mesh.node_dof = cell.periodic_node_dof[static_cast<int>(p)];
  mesh.ndof = cell.periodic_ndof[static_cast<int>(p)];
  return mesh;
}

PhaseMesh unit_closed_phase_mesh(const UnitCell& cell, Phase p) {
  PhaseMesh mesh;
  mesh.dim = cell.dim;
  mesh.nvox = cell.n;
  mesh.nodes_per_axis = cell.n + 1;
  mesh.periodic = false;
  mesh.h = cell.h();
  mesh.elements = cell.phase_voxels[static_cast<int>(p)];
  mesh.node_dof = cell.position_to_phase[static_cast<int>(p)];
  mesh.ndof = cell.phase_point_count(p);
  return mesh;
}

PhaseMesh full_grid_mesh(int dim, Index elements_per_axis) {
  PhaseMesh mesh;
  mesh.dim = dim;
  mesh.nvox = elements_per_axis;
  mesh.nodes_per_axis = elements_per_axis + 1;
  mesh.periodic = false;
  mesh.h = 1.0 / static_cast<double>(elements_per_axis);
  Index nel = 1, nn = 1;
  for (int k = 0; k < dim; ++k) {
    nel *= elements_per_axis;
    nn *= elements_per_axis + 1;
  }
  mesh.elements.resize(static_cast<std::size_t>(nel));
  for (Index e = 0; e < nel; ++e) mesh.elements[static_cast<std::size_t>(e)] = e;
  mesh.node_dof.resize(static_cast<std::size_t>(nn));
  for (Index i = 0; i < nn; ++i) mesh.node_dof[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(i);
  mesh.ndof = nn;
  return mesh;
}

SurfaceMesh surface_mesh(const TiledDomain& dom) {
  SurfaceMesh surf;
  surf.dim = dom.dim;
  surf.face_h = dom.h();
  surf.ndof = dom.membrane_dof_count();
  surf.corner_count = dom.dim == 3 ? 4 : 2;
  surf.faces.reserve(dom.faces.size());
  for (const auto& f : dom.faces) surf.faces.push_back(f.mem_corners);
  return surf;
}

SurfaceMesh unit_surface_mesh(const UnitCell& cell) {
  SurfaceMesh surf;
  surf.dim = cell.dim;
  surf.face_h = cell.h();
  surf.ndof = cell.membrane_point_count();
  surf.corner_count = cell.dim == 3 ? 4 : 2;
  surf.faces.reserve(cell.faces.size());
  for (const auto& f : cell.faces) {
    std::array<std::int32_t, 4> ids{};
    for (int q = 0; q < f.corner_count; ++q)
      ids[static_cast<std::size_t>(q)] =
          cell.position_to_membrane[static_cast<std::size_t>(cell.closed_lattice_index(f.corners[static_cast<std::size_t>(q)]))];
    surf.faces.push_back(ids);
  }
  return surf;
}

CsrMatrix assemble_stiffness(const PhaseMesh& mesh, const TensorSampler& sigma, EllipticityCheck check) {
  const int d = mesh.dim;
  const int nc = 1 << d;
  const QuadRule q = tensor_gauss(d);
  const double scale = std::pow(mesh.h, d - 2);

  TripletBuilder tb(mesh.ndof, mesh.ndof);
  double K[8][8];
  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    const Point o = mesh.voxel_origin(e);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) K[i][j] = 0.0;
    for (int p = 0; p < q.npts; ++p) {
      const auto& xi = q.xi[static_cast<std::size_t>(p)];
      const Point xq{o[0] + xi[0] * mesh.h, o[1] + xi[1] * mesh.h, d == 3 ? o[2] + xi[2] * mesh.h : 0.0};
      const SymTensor s = sigma(xq);
      check_ellipticity(s, xq, check);
      double grads[8][3];
      for (int k = 0; k < nc; ++k) shape_grad(d, k, xi, grads[k]);
      const double wq = q.w[static_cast<std::size_t>(p)];
      for (int i = 0; i < nc; ++i)
        for (int j = 0; j < nc; ++j) {
          double v = 0.0;
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) v += grads[i][a] * s(a, b) * grads[j][b];
          K[i][j] += wq * v;
        }
    }
    std::int32_t dofs[8];
    for (int k = 0; k < nc; ++k) dofs[k] = mesh.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) tb.add(dofs[i], dofs[j], scale * K[i][j]);
  }
  return tb.build();
}

CsrMatrix assemble_volume_mass(const PhaseMesh& mesh) {
  const int d = mesh.dim;
  const int nc = 1 << d;
  const double vol = std::pow(mesh.h, d);
  // Exact tensor-product mass: entries (1/3, 1/6) per axis.
  TripletBuilder tb(mesh.ndof, mesh.ndof);
  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    std::int32_t dofs[8];
    for (int k = 0; k < nc; ++k) dofs[k] = mesh.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) {
        double v = vol;
        for (int a = 0; a < d; ++a) {
          const int ia = (i >> a) & 1, ja = (j >> a) & 1;
          v *= ia == ja ? 1.0 / 3.0 : 1.0 / 6.0;
        }
        tb.add(dofs[i], dofs[j], v);
      }
  }
  return tb.build();
}

std::vector<double> assemble_load(const PhaseMesh& mesh, const ScalarSampler& f) {
  const int d = mesh.dim;
  const int nc = 1 << d;
  const QuadRule q = tensor_gauss(d);
  const double vol = std::pow(mesh.h, d);
  std::vector<double> rhs(static_cast<std::size_t>(mesh.ndof), 0.0);
  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    const Point o = mesh.voxel_origin(e);
    for (int p = 0; p < q.npts; ++p) {
      const auto& xi = q.xi[static_cast<std::size_t>(p)];
      const Point xq{o[0] + xi[0] * mesh.h, o[1] + xi[1] * mesh.h, d == 3 ? o[2] + xi[2] * mesh.h : 0.0};
      const double fv = f(xq) * q.w[static_cast<std::size_t>(p)] * vol;
      for (int k = 0; k < nc; ++k) {
        const auto dof = mesh.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1);
        rhs[static_cast<std::size_t>(dof)] += fv * shape(d, k, xi);
      }
    }
  }
  return rhs;
}

std::vector<double> assemble_flux_load(const PhaseMesh& mesh, const TensorSampler& sigma, int direction) {
  const int d = mesh.dim;
  const int nc = 1 << d;
  const QuadRule q = tensor_gauss(d);
  const double scale = std::pow(mesh.h, d - 1);  // h^d volume times 1/h for the physical gradient
  std::vector<double> rhs(static_cast<std::size_t>(mesh.ndof), 0.0);
  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    const Point o = mesh.voxel_origin(e);
    for (int p = 0; p < q.npts; ++p) {
      const auto& xi = q.xi[static_cast<std::size_t>(p)];
      const Point xq{o[0] + xi[0] * mesh.h, o[1] + xi[1] * mesh.h, d == 3 ? o[2] + xi[2] * mesh.h : 0.0};
      const SymTensor s = sigma(xq);
      // Column `direction` of sigma.
      double flux[3] = {0, 0, 0};
      for (int a = 0; a < d; ++a) flux[a] = s(a, direction);
      const double wq = q.w[static_cast<std::size_t>(p)] * scale;
      for (int k = 0; k < nc; ++k) {
        double g[3];
        shape_grad(d, k, xi, g);
        double v = 0.0;
        for (int a = 0; a < d; ++a) v += flux[a] * g[a];
        rhs[static_cast<std::size_t>(mesh.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1))] += wq * v;
      }
    }
  }
  return rhs;
}

std::vector<double> lumped_volume(const PhaseMesh& mesh) {
  const int d = mesh.dim;
  const int nc = 1 << d;
  const double share = std::pow(mesh.h, d) / nc;
  std::vector<double> m(static_cast<std::size_t>(mesh.ndof), 0.0);
  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    for (int k = 0; k < nc; ++k)
      m[static_cast<std::size_t>(mesh.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1))] += share;
  }
  return m;
}

CsrMatrix assemble_surface_mass(const SurfaceMesh& surf) {
  if (surf.faces.empty()) throw NumericError("degenerate geometry: membrane face list is empty");
  const int td = surf.dim - 1;  // tangential dimensions
  const int nc = surf.corner_count;
  const double area = surf.face_area();
  TripletBuilder tb(surf.ndof, surf.ndof);
  for (const auto& f : surf.faces)
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j) {
        double v = area;
        for (int a = 0; a < td; ++a) {
          const int ia = (i >> a) & 1, ja = (j >> a) & 1;
          v *= ia == ja ? 1.0 / 3.0 : 1.0 / 6.0;
        }
        tb.add(f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(j)], v);
      }
  return tb.build();
}

std::vector<double> lumped_surface(const SurfaceMesh& surf) {
  if (surf.faces.empty()) throw NumericError("degenerate geometry: membrane face list is empty");
  const double share = surf.face_area() / surf.corner_count;
  std::vector<double> m(static_cast<std::size_t>(surf.ndof), 0.0);
  for (const auto& f : surf.faces)
    for (int q = 0; q < surf.corner_count; ++q) m[static_cast<std::size_t>(f[static_cast<std::size_t>(q)])] += share;
  return m;
}

double l2_volume_norm(const PhaseMesh& mesh, const std::vector<double>& u) {
  const int d = mesh.dim;
  const int nc = 1 << d;
  const QuadRule q = tensor_gauss(d);
  const double vol = std::pow(mesh.h, d);
  double acc = 0.0;
  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    double uc[8];
    for (int k = 0; k < nc; ++k) uc[k] = u[static_cast<std::size_t>(mesh.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1))];
    for (int p = 0; p < q.npts; ++p) {
      double v = 0.0;
      for (int k = 0; k < nc; ++k) v += uc[k] * shape(d, k, q.xi[static_cast<std::size_t>(p)]);
      acc += q.w[static_cast<std::size_t>(p)] * vol * v * v;
    }
  }
  return std::sqrt(acc);
}

double h1_seminorm(const PhaseMesh& mesh, const std::vector<double>& u) {
  const int d = mesh.dim;
  const int nc = 1 << d;
  const QuadRule q = tensor_gauss(d);
  const double scale = std::pow(mesh.h, d - 2);
  double acc = 0.0;
  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    double uc[8];
    for (int k = 0; k < nc; ++k) uc[k] = u[static_cast<std::size_t>(mesh.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1))];
    for (int p = 0; p < q.npts; ++p) {
      double g[3] = {0, 0, 0};
      for (int k = 0; k < nc; ++k) {
        double gk[3];
        shape_grad(d, k, q.xi[static_cast<std::size_t>(p)], gk);
        for (int a = 0; a < d; ++a) g[a] += uc[k] * gk[a];
      }
      double s = 0.0;
      for (int a = 0; a < d; ++a) s += g[a] * g[a];
      acc += q.w[static_cast<std::size_t>(p)] * scale * s;
    }
  }
  return std::sqrt(acc);
}

double integral_volume(const PhaseMesh& mesh, const std::vector<double>& u) {
  const int d = mesh.dim;
  const int nc = 1 << d;
  const double share = std::pow(mesh.h, d) / nc;
  double acc = 0.0;
  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    for (int k = 0; k < nc; ++k)
      acc += share * u[static_cast<std::size_t>(mesh.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1))];
  }
  return acc;
}

namespace {

template <typename F>
double surface_quadrature(const SurfaceMesh& surf, const std::vector<double>& v, F&& integrand) {
  const int td = surf.dim - 1;
  const QuadRule q = tensor_gauss(td);
  const double area = surf.face_area();
  double acc = 0.0;
  for (const auto& f : surf.faces)
    for (int p = 0; p < q.npts; ++p) {
      double val = 0.0;
      for (int k = 0; k < surf.corner_count; ++k)
        val += v[static_cast<std::size_t>(f[static_cast<std::size_t>(k)])] * shape(td, k, q.xi[static_cast<std::size_t>(p)]);
      acc += q.w[static_cast<std::size_t>(p)] * area * integrand(val);
    }
  return acc;
}

}  // namespace

double l2_surface_norm(const SurfaceMesh& surf, const std::vector<double>& v) {
  return std::sqrt(surface_quadrature(surf, v, [](double x) { return x * x; }));
}

double l4_surface_norm(const SurfaceMesh& surf, const std::vector<double>& v) {
  return std::pow(surface_quadrature(surf, v, [](double x) { return x * x * x * x; }), 0.25);
}

double integral_surface(const SurfaceMesh& surf, const std::vector<double>& v) {
  return surface_quadrature(surf, v, [](double x) { return x; });
}

double integrate_norm(const Field& f, const TiledDomain& dom, NormKind which) {
  switch (which) {
    case NormKind::L2Volume: {
      if (f.space != FieldSpace::PhaseI && f.space != FieldSpace::PhaseE)
        throw ConfigError("integrate_norm: L2 volume norm needs a phase field");
      const Phase p = f.space == FieldSpace::PhaseI ? Phase::Intra : Phase::Extra;
      const PhaseMesh mesh = phase_mesh(dom, p);
      if (f.size() != mesh.ndof) throw ConfigError("integrate_norm: DOF map mismatch");
      return l2_volume_norm(mesh, f.values);
    }
    case NormKind::H1Seminorm: {
      if (f.space != FieldSpace::PhaseI && f.space != FieldSpace::PhaseE)
        throw ConfigError("integrate_norm: H1 seminorm needs a phase field");
      const Phase p = f.space == FieldSpace::PhaseI ? Phase::Intra : Phase::Extra;
      const PhaseMesh mesh = phase_mesh(dom, p);
      if (f.size() != mesh.ndof) throw ConfigError("integrate_norm: DOF map mismatch");
      return h1_seminorm(mesh, f.values);
    }
    case NormKind::L2Surface:
    case NormKind::L4Surface: {
      require_space(f, FieldSpace::Membrane, "integrate_norm");
      const SurfaceMesh surf = surface_mesh(dom);
      if (f.size() != surf.ndof) throw ConfigError("integrate_norm: DOF map mismatch");
      return which == NormKind::L2Surface ? l2_surface_norm(surf, f.values) : l4_surface_norm(surf, f.values);
    }
  }
  return 0.0;
}

std::vector<double> gather_trace(const TiledDomain& dom, const std::vector<double>& phase_values, Phase p) {
  const auto& map = p == Phase::Intra ? dom.mem_to_i : dom.mem_to_e;
  std::vector<double> out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = phase_values[static_cast<std::size_t>(map[i])];
  return out;
}

double eval_grid_field(const PhaseMesh& grid, const std::vector<double>& u, const Point& x) {
  const int d = grid.dim;
  const double h = grid.h;
  Index c[3] = {0, 0, 0};
  std::array<double, 3> xi{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    double s = x[static_cast<std::size_t>(a)] / h;
    Index e = static_cast<Index>(std::floor(s));
    if (e < 0) e = 0;
    if (e >= grid.nvox) e = grid.nvox - 1;
    c[a] = e;
    xi[static_cast<std::size_t>(a)] = s - static_cast<double>(e);
  }
  const int nc = 1 << d;
  double v = 0.0;
  for (int k = 0; k < nc; ++k) {
    const auto dof = grid.corner_dof(c, k & 1, (k >> 1) & 1, (k >> 2) & 1);
    v += u[static_cast<std::size_t>(dof)] * shape(d, k, xi);
  }
  return v;
}

}  // namespace bidomain
