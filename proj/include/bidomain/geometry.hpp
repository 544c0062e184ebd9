#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "bidomain/types.hpp"

namespace bidomain {

enum class CellKind { Laminate, Inclusion, BridgedInclusion };

/// Parameters of the reference-cell microstructure. Lengths are fractions of
/// the unit cell and must align with the voxel lattice.
struct CellGeometrySpec {
  CellKind kind{CellKind::Inclusion};
  int dim{2};
  int resolution{8};  // voxels per axis, power of two, >= 4

  double thickness{0.5};  // laminate: |Y_i| slab thickness
  int axis{0};            // laminate: normal axis, 0-based

  double half_width{0.25};         // inclusion: box half-width around the cell center
  double bridge_half_width{0.125};  // bridged inclusion: channel half-width
};

/// One voxel face of the membrane. Corner positions live on the closed node
/// lattice 0..n of the owning cell; faces across the periodic wrap sit at
/// lattice coordinate n.
struct MembraneFace {
  std::array<std::array<int, 3>, 4> corners{};  // tensor order, low tangential axis fastest
  int corner_count{2};                          // 2 in 2D, 4 in 3D
  int normal_axis{0};
  int normal_sign{1};  // +1: intracellular side below along normal_axis
};

/// Voxel partition of the reference cube Y into intra/extracellular phases
/// with the separating membrane. Immutable after construction.
struct UnitCell {
  int dim{2};
  int n{8};                          // voxels per axis
  std::vector<std::uint8_t> labels;  // n^dim, 0 = intra, 1 = extra, x fastest

  std::vector<MembraneFace> faces;

  double volume_i{0}, volume_e{0};
  double gamma_area{0};

  // Distinct membrane sample positions (face corners) on the closed lattice,
  // sorted lexicographically; flat lookup over the (n+1)^dim lattice.
  std::vector<std::array<int, 3>> membrane_positions;
  std::vector<std::int32_t> position_to_membrane;

  // Per phase: closed-lattice sample positions = corners of phase voxels plus
  // all membrane positions (traces are taken there), with flat lookup.
  std::array<std::vector<std::array<int, 3>>, 2> phase_positions;
  std::array<std::vector<std::int32_t>, 2> position_to_phase;

  // Per phase: DOF map on the periodic node lattice (n^dim nodes) used by the
  // cell problems.
  std::array<std::vector<std::int32_t>, 2> periodic_node_dof;
  std::array<Index, 2> periodic_ndof{0, 0};

  std::array<std::vector<Index>, 2> phase_voxels;

  double h() const { return 1.0 / n; }
  double volume(Phase p) const { return p == Phase::Intra ? volume_i : volume_e; }

  Index voxel_index(int cx, int cy, int cz) const {
    return cx + static_cast<Index>(n) * (cy + static_cast<Index>(n) * cz);
  }
  std::uint8_t label_at(int cx, int cy, int cz) const {
    return labels[static_cast<std::size_t>(voxel_index(cx, cy, cz))];
  }
  Index closed_lattice_index(const std::array<int, 3>& pos) const {
    const Index np = n + 1;
    return pos[0] + np * (pos[1] + np * (dim == 3 ? pos[2] : 0));
  }
  Index periodic_lattice_index(int px, int py, int pz) const {
    const int q = n;
    auto wrap = [q](int v) { return ((v % q) + q) % q; };
    return wrap(px) + static_cast<Index>(q) * (wrap(py) + static_cast<Index>(q) * (dim == 3 ? wrap(pz) : 0));
  }
  Index membrane_point_count() const { return static_cast<Index>(membrane_positions.size()); }
  Index phase_point_count(Phase p) const { return static_cast<Index>(phase_positions[static_cast<int>(p)].size()); }
};

/// Connectivity of one phase under periodic face adjacency.
struct ConnectivityReport {
  Phase phase{Phase::Intra};
  int components{0};
  std::array<bool, 3> spans_axis{false, false, false};  // union over components
  bool spans_all_axes{false};
  std::vector<int> component_of_voxel;  // -1 for voxels of the other phase
};

/// Membrane face instanced into the tiled domain; corners are membrane DOFs.
struct GlobalFace {
  std::array<std::int32_t, 4> mem_corners{};
  int corner_count{2};
  Index cell{0};
  std::int32_t unit_face{0};
  int normal_axis{0};
  int normal_sign{1};
};

/// eps-periodic tiling of the unit cube by N^dim copies of a UnitCell, with
/// per-phase node DOF maps and the instanced membrane. Immutable.
struct TiledDomain {
  std::shared_ptr<const UnitCell> cell;
  int N{1};
  double eps{1.0};
  int dim{2};
  int n{8};
  Index m{8};  // voxels per axis of the global grid

  std::array<std::vector<std::int32_t>, 2> node_dof;  // (m+1)^dim per phase, -1 if absent
  std::array<Index, 2> ndof{0, 0};
  std::array<std::vector<Index>, 2> phase_voxels;

  std::vector<std::int32_t> node_membrane;  // global node -> membrane DOF, -1 if none
  std::vector<Index> membrane_nodes;        // membrane DOF -> global node
  std::vector<GlobalFace> faces;            // cell-major: cell * faces_per_cell + f
  std::vector<std::int32_t> mem_to_i, mem_to_e;

  std::array<double, 2> phase_volume{0, 0};
  double gamma_area{0};

  double h() const { return 1.0 / static_cast<double>(m); }
  Index cells() const {
    Index c = 1;
    for (int d = 0; d < dim; ++d) c *= N;
    return c;
  }
  Index node_count() const {
    Index c = 1;
    for (int d = 0; d < dim; ++d) c *= (m + 1);
    return c;
  }
  Index node_index(Index gx, Index gy, Index gz) const {
    const Index np = m + 1;
    return gx + np * (gy + np * (dim == 3 ? gz : 0));
  }
  Index voxel_index(Index gx, Index gy, Index gz) const {
    return gx + m * (gy + m * (dim == 3 ? gz : 0));
  }
  std::uint8_t label_at(Index gx, Index gy, Index gz) const {
    return cell->label_at(static_cast<int>(gx % n), static_cast<int>(gy % n),
                          dim == 3 ? static_cast<int>(gz % n) : 0);
  }
  /// Cell index (kx, ky, kz) -> linear cell id, x fastest.
  Index cell_index(int kx, int ky, int kz) const {
    return kx + static_cast<Index>(N) * (ky + static_cast<Index>(N) * (dim == 3 ? kz : 0));
  }
  /// Global node under cell k at a closed unit-cell lattice position.
  Index global_node(Index cell_id, const std::array<int, 3>& pos) const {
    const Index kx = cell_id % N, ky = (cell_id / N) % N, kz = dim == 3 ? cell_id / (static_cast<Index>(N) * N) : 0;
    return node_index(kx * n + pos[0], ky * n + pos[1], dim == 3 ? kz * n + pos[2] : 0);
  }
  Point node_position(Index node) const {
    const Index np = m + 1;
    const Index gx = node % np, gy = (node / np) % np, gz = node / (np * np);
    const double hg = h();
    return {static_cast<double>(gx) * hg, static_cast<double>(gy) * hg,
            dim == 3 ? static_cast<double>(gz) * hg : 0.0};
  }
  Index membrane_dof_count() const { return static_cast<Index>(membrane_nodes.size()); }
};

UnitCell build_unit_cell(const CellGeometrySpec& spec);

/// Builds the cell bookkeeping from raw voxel labels (0 = intra, 1 = extra);
/// mainly for tests and custom microstructures.
UnitCell build_unit_cell_from_labels(int dim, int n, std::vector<std::uint8_t> labels);

/// Tiles the unit cube with N^dim cells; refuses when the node grid would
/// exhaust memory, reporting the estimated DOF count.
TiledDomain tile_domain(std::shared_ptr<const UnitCell> cell, int N);

ConnectivityReport phase_connectivity(const UnitCell& cell, Phase phase);

/// Legacy-VTK structured-points dump of the voxel labels.
void write_vtk_voxels(const UnitCell& cell, std::ostream& os);

}  // namespace bidomain
