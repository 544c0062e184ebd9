#pragma once

#include <array>
#include <functional>
#include <vector>

#include "bidomain/geometry.hpp"
#include "bidomain/sparse.hpp"
#include "bidomain/types.hpp"

namespace bidomain {

/// Q1 mesh over the voxels of one phase on a structured grid. Nodes may be
/// closed (grid boundary nodes distinct) or periodic (wrapped).
struct PhaseMesh {
  int dim{2};
  Index nvox{8};            // voxels per axis
  Index nodes_per_axis{9};  // nvox+1 closed, nvox periodic
  bool periodic{false};
  double h{0.125};
  std::vector<Index> elements;           // voxel ids, x fastest order
  std::vector<std::int32_t> node_dof;    // lattice node -> DOF, -1 if absent
  Index ndof{0};

  void voxel_coords(Index e, Index c[3]) const {
    c[0] = e % nvox;
    c[1] = (e / nvox) % nvox;
    c[2] = dim == 3 ? e / (nvox * nvox) : 0;
  }
  Index lattice_node(Index x, Index y, Index z) const {
    if (periodic) {
      x %= nvox;
      y %= nvox;
      z %= nvox;
    }
    return x + nodes_per_axis * (y + nodes_per_axis * (dim == 3 ? z : 0));
  }
  std::int32_t corner_dof(const Index c[3], int dx, int dy, int dz) const {
    return node_dof[static_cast<std::size_t>(lattice_node(c[0] + dx, c[1] + dy, dim == 3 ? c[2] + dz : 0))];
  }
  Point voxel_origin(Index e) const {
    Index c[3];
    voxel_coords(e, c);
    return {c[0] * h, c[1] * h, dim == 3 ? c[2] * h : 0.0};
  }
};

PhaseMesh phase_mesh(const TiledDomain& dom, Phase p);
PhaseMesh periodic_phase_mesh(const UnitCell& cell, Phase p);
/// Closed-lattice mesh of one phase of the reference cell; DOFs are the
/// cell's phase sample positions (used by the unfolding norms).
PhaseMesh unit_closed_phase_mesh(const UnitCell& cell, Phase p);
/// Whole-cube mesh with every grid node a DOF (macroscopic model).
PhaseMesh full_grid_mesh(int dim, Index elements_per_axis);

/// Membrane faces indexed by membrane DOFs; all faces share one edge length.
struct SurfaceMesh {
  int dim{2};
  double face_h{0.125};
  Index ndof{0};
  int corner_count{2};
  std::vector<std::array<std::int32_t, 4>> faces;
  double face_area() const { return dim == 3 ? face_h * face_h : face_h; }
  double total_area() const { return face_area() * static_cast<double>(faces.size()); }
};

SurfaceMesh surface_mesh(const TiledDomain& dom);
SurfaceMesh unit_surface_mesh(const UnitCell& cell);

/// Pointwise conductivity sample at a physical quadrature point.
using TensorSampler = std::function<SymTensor(const Point&)>;
using ScalarSampler = std::function<double(const Point&)>;

/// Effective macroscopic tensors may be singular (disconnected phases);
/// microscopic conductivities must be uniformly elliptic.
enum class EllipticityCheck { PositiveDefinite, Semidefinite };

/// Q1 stiffness with tensor-product 2-point Gauss quadrature; samples failing
/// the requested ellipticity check abort assembly naming the offending
/// quadrature point.
CsrMatrix assemble_stiffness(const PhaseMesh& mesh, const TensorSampler& sigma,
                             EllipticityCheck check = EllipticityCheck::PositiveDefinite);
CsrMatrix assemble_volume_mass(const PhaseMesh& mesh);
/// Right side of the corrector problem: integral of (sigma e_k) . grad(phi).
std::vector<double> assemble_flux_load(const PhaseMesh& mesh, const TensorSampler& sigma, int direction);
std::vector<double> assemble_load(const PhaseMesh& mesh, const ScalarSampler& f);
/// Row sums of the volume mass matrix (integral of each basis function).
std::vector<double> lumped_volume(const PhaseMesh& mesh);

CsrMatrix assemble_surface_mass(const SurfaceMesh& surf);
std::vector<double> lumped_surface(const SurfaceMesh& surf);

// Quadrature-exact norms for Q1 fields (L2 / H1); the surface L4 norm uses
// per-face Gauss quadrature of the interpolant.
double l2_volume_norm(const PhaseMesh& mesh, const std::vector<double>& u);
double h1_seminorm(const PhaseMesh& mesh, const std::vector<double>& u);
double integral_volume(const PhaseMesh& mesh, const std::vector<double>& u);
double l2_surface_norm(const SurfaceMesh& surf, const std::vector<double>& v);
double l4_surface_norm(const SurfaceMesh& surf, const std::vector<double>& v);
double integral_surface(const SurfaceMesh& surf, const std::vector<double>& v);

enum class NormKind { L2Volume, L2Surface, L4Surface, H1Seminorm };
double integrate_norm(const Field& f, const TiledDomain& dom, NormKind which);

/// Membrane trace of a phase field.
std::vector<double> gather_trace(const TiledDomain& dom, const std::vector<double>& phase_values, Phase p);

/// Multilinear evaluation of a full-grid Q1 field at an arbitrary point of
/// the closed unit cube.
double eval_grid_field(const PhaseMesh& grid, const std::vector<double>& u, const Point& x);

}  // namespace bidomain
