#include "bidomain/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>

namespace bidomain {

namespace {

constexpr std::uint8_t kIntra = 0;
constexpr std::uint8_t kExtra = 1;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Converts a length fraction to a voxel count, requiring exact lattice
// alignment.
int aligned_voxels(double fraction, int n, const char* param) {
  const double scaled = fraction * n;
  const double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-9) {
    std::ostringstream os;
    os << "geometry." << param << " = " << fraction << " does not align to the voxel lattice (resolution " << n
       << ")";
    throw ConfigError(os.str());
  }
  return static_cast<int>(rounded);
}

void validate_spec(const CellGeometrySpec& spec) {
  std::vector<std::string> errs;
  if (spec.dim != 2 && spec.dim != 3) errs.push_back("geometry.dimension must be 2 or 3");
  if (spec.resolution < 4) errs.push_back("geometry.resolution must be >= 4");
  if (!is_power_of_two(spec.resolution)) errs.push_back("geometry.resolution must be a power of two");
  switch (spec.kind) {
    case CellKind::Laminate:
      if (!(spec.thickness > 0.0 && spec.thickness < 1.0)) errs.push_back("geometry.thickness must lie in (0,1)");
      if (spec.axis < 0 || spec.axis >= spec.dim) errs.push_back("geometry.axis out of range");
      break;
    case CellKind::Inclusion:
      if (!(spec.half_width > 0.0 && spec.half_width < 0.5)) errs.push_back("geometry.half_width must lie in (0,1/2)");
      break;
    case CellKind::BridgedInclusion:
      if (!(spec.half_width > 0.0 && spec.half_width < 0.5)) errs.push_back("geometry.half_width must lie in (0,1/2)");
      if (!(spec.bridge_half_width > 0.0)) errs.push_back("geometry.bridge_half_width must be positive");
      if (!(spec.bridge_half_width < spec.half_width))
        errs.push_back("geometry.bridge_half_width must be smaller than geometry.half_width");
      break;
  }
  if (!errs.empty()) {
    std::string all;
    for (const auto& e : errs) {
      if (!all.empty()) all += "; ";
      all += e;
    }
    throw ConfigError(all);
  }
}

std::vector<std::uint8_t> make_labels(const CellGeometrySpec& spec) {
  const int n = spec.resolution;
  const int d = spec.dim;
  Index total = 1;
  for (int k = 0; k < d; ++k) total *= n;
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(total), kExtra);

  auto for_each_voxel = [&](auto&& fn) {
    const int nz = d == 3 ? n : 1;
    Index id = 0;
    for (int cz = 0; cz < nz; ++cz)
      for (int cy = 0; cy < n; ++cy)
        for (int cx = 0; cx < n; ++cx) fn(id++, std::array<int, 3>{cx, cy, cz});
  };

  switch (spec.kind) {
    case CellKind::Laminate: {
      const int t = aligned_voxels(spec.thickness, n, "thickness");
      for_each_voxel([&](Index id, const std::array<int, 3>& c) {
        if (c[static_cast<std::size_t>(spec.axis)] < t) labels[static_cast<std::size_t>(id)] = kIntra;
      });
      break;
    }
    case CellKind::Inclusion: {
      const int lo = aligned_voxels(0.5 - spec.half_width, n, "half_width");
      const int hi = aligned_voxels(0.5 + spec.half_width, n, "half_width");
      for_each_voxel([&](Index id, const std::array<int, 3>& c) {
        bool in = true;
        for (int k = 0; k < d; ++k) in = in && c[static_cast<std::size_t>(k)] >= lo && c[static_cast<std::size_t>(k)] < hi;
        if (in) labels[static_cast<std::size_t>(id)] = kIntra;
      });
      break;
    }
    case CellKind::BridgedInclusion: {
      const int lo = aligned_voxels(0.5 - spec.half_width, n, "half_width");
      const int hi = aligned_voxels(0.5 + spec.half_width, n, "half_width");
      const int bl = aligned_voxels(0.5 - spec.bridge_half_width, n, "bridge_half_width");
      const int bh = aligned_voxels(0.5 + spec.bridge_half_width, n, "bridge_half_width");
      for_each_voxel([&](Index id, const std::array<int, 3>& c) {
        bool in = true;
        for (int k = 0; k < d; ++k) in = in && c[static_cast<std::size_t>(k)] >= lo && c[static_cast<std::size_t>(k)] < hi;
        if (!in) {
          // Bridges: a channel through the whole cell along each axis.
          for (int a = 0; a < d && !in; ++a) {
            bool channel = true;
            for (int k = 0; k < d; ++k) {
              if (k == a) continue;
              channel = channel && c[static_cast<std::size_t>(k)] >= bl && c[static_cast<std::size_t>(k)] < bh;
            }
            in = channel;
          }
        }
        if (in) labels[static_cast<std::size_t>(id)] = kIntra;
      });
      break;
    }
  }
  return labels;
}

}  // namespace

UnitCell build_unit_cell(const CellGeometrySpec& spec) {
  validate_spec(spec);
  return build_unit_cell_from_labels(spec.dim, spec.resolution, make_labels(spec));
}

UnitCell build_unit_cell_from_labels(int dim, int n_, std::vector<std::uint8_t> labels_in) {
  UnitCell cell;
  cell.dim = dim;
  cell.n = n_;
  cell.labels = std::move(labels_in);
  {
    Index expect = 1;
    for (int k = 0; k < dim; ++k) expect *= n_;
    if (static_cast<Index>(cell.labels.size()) != expect)
      throw ConfigError("label array size does not match the voxel grid");
  }

  const int n = cell.n;
  const int d = cell.dim;
  const int nz = d == 3 ? n : 1;

  Index count_i = 0;
  for (auto l : cell.labels) count_i += (l == kIntra);
  const Index total = static_cast<Index>(cell.labels.size());
  cell.volume_i = static_cast<double>(count_i) / static_cast<double>(total);
  cell.volume_e = static_cast<double>(total - count_i) / static_cast<double>(total);

  // Membrane faces: scan voxel pairs across each axis with periodic wrap.
  // The face between voxel c and its +axis neighbour sits at lattice
  // coordinate c+1; wrap faces therefore land on the high lattice plane n.
  for (int cz = 0; cz < nz; ++cz)
    for (int cy = 0; cy < n; ++cy)
      for (int cx = 0; cx < n; ++cx) {
        const std::array<int, 3> c{cx, cy, cz};
        const std::uint8_t la = cell.label_at(cx, cy, cz);
        for (int a = 0; a < d; ++a) {
          std::array<int, 3> nb = c;
          nb[static_cast<std::size_t>(a)] = (nb[static_cast<std::size_t>(a)] + 1) % n;
          const std::uint8_t lb = cell.label_at(nb[0], nb[1], nb[2]);
          if (la == lb) continue;
          MembraneFace f;
          f.normal_axis = a;
          f.normal_sign = la == kIntra ? +1 : -1;
          const int plane = c[static_cast<std::size_t>(a)] + 1;
          int t1 = -1, t2 = -1;
          for (int k = 0; k < d; ++k)
            if (k != a) (t1 < 0 ? t1 : t2) = k;
          f.corner_count = d == 3 ? 4 : 2;
          for (int q = 0; q < f.corner_count; ++q) {
            std::array<int, 3> pos = c;
            pos[static_cast<std::size_t>(a)] = plane;
            pos[static_cast<std::size_t>(t1)] += q & 1;
            if (d == 3) pos[static_cast<std::size_t>(t2)] += (q >> 1) & 1;
            f.corners[static_cast<std::size_t>(q)] = pos;
          }
          cell.faces.push_back(f);
        }
      }

  const double h = cell.h();
  cell.gamma_area = static_cast<double>(cell.faces.size()) * std::pow(h, d - 1);

  // Distinct membrane positions, sorted for stable indexing.
  const Index np = n + 1;
  Index closed_total = 1;
  for (int k = 0; k < d; ++k) closed_total *= np;
  cell.position_to_membrane.assign(static_cast<std::size_t>(closed_total), -1);
  std::vector<std::array<int, 3>> pts;
  for (const auto& f : cell.faces)
    for (int q = 0; q < f.corner_count; ++q) pts.push_back(f.corners[static_cast<std::size_t>(q)]);
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return std::tie(a[2], a[1], a[0]) < std::tie(b[2], b[1], b[0]);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  cell.membrane_positions = pts;
  for (std::size_t i = 0; i < pts.size(); ++i)
    cell.position_to_membrane[static_cast<std::size_t>(cell.closed_lattice_index(pts[i]))] =
        static_cast<std::int32_t>(i);

  // Per-phase closed sample positions and periodic node DOFs.
  for (int p = 0; p < 2; ++p) {
    cell.position_to_phase[p].assign(static_cast<std::size_t>(closed_total), -1);
    Index pn = 1;
    for (int k = 0; k < d; ++k) pn *= n;
    cell.periodic_node_dof[p].assign(static_cast<std::size_t>(pn), -1);
  }
  std::array<std::vector<char>, 2> closed_mark;
  closed_mark[0].assign(static_cast<std::size_t>(closed_total), 0);
  closed_mark[1].assign(static_cast<std::size_t>(closed_total), 0);

  for (int cz = 0; cz < nz; ++cz)
    for (int cy = 0; cy < n; ++cy)
      for (int cx = 0; cx < n; ++cx) {
        const int p = cell.label_at(cx, cy, cz) == kIntra ? 0 : 1;
        cell.phase_voxels[p].push_back(cell.voxel_index(cx, cy, cz));
        const int qz = d == 3 ? 2 : 1;
        for (int dz = 0; dz < qz; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::array<int, 3> pos{cx + dx, cy + dy, d == 3 ? cz + dz : 0};
              closed_mark[p][static_cast<std::size_t>(cell.closed_lattice_index(pos))] = 1;
              const Index pid = cell.periodic_lattice_index(pos[0], pos[1], pos[2]);
              if (cell.periodic_node_dof[p][static_cast<std::size_t>(pid)] < 0)
                cell.periodic_node_dof[p][static_cast<std::size_t>(pid)] = 0;  // marked, numbered below
            }
      }
  // Membrane positions belong to both phase sample sets (traces live there).
  for (const auto& pos : cell.membrane_positions) {
    closed_mark[0][static_cast<std::size_t>(cell.closed_lattice_index(pos))] = 1;
    closed_mark[1][static_cast<std::size_t>(cell.closed_lattice_index(pos))] = 1;
  }

  for (int p = 0; p < 2; ++p) {
    const int qz = d == 3 ? n : 0;
    for (int z = 0; z <= qz; ++z)
      for (int y = 0; y <= n; ++y)
        for (int x = 0; x <= n; ++x) {
          const std::array<int, 3> pos{x, y, d == 3 ? z : 0};
          const Index ci = cell.closed_lattice_index(pos);
          if (closed_mark[p][static_cast<std::size_t>(ci)]) {
            cell.position_to_phase[p][static_cast<std::size_t>(ci)] =
                static_cast<std::int32_t>(cell.phase_positions[p].size());
            cell.phase_positions[p].push_back(pos);
          }
          if (d == 2 && z > 0) break;
        }
    Index next = 0;
    for (auto& v : cell.periodic_node_dof[p])
      if (v == 0) v = static_cast<std::int32_t>(next++);
    cell.periodic_ndof[p] = next;
  }

  return cell;
}

TiledDomain tile_domain(std::shared_ptr<const UnitCell> cell, int N) {
  if (N < 1) throw ConfigError("tile factor N must be >= 1");
  TiledDomain dom;
  dom.cell = std::move(cell);
  dom.N = N;
  dom.dim = dom.cell->dim;
  dom.n = dom.cell->n;
  dom.eps = 1.0 / static_cast<double>(N);
  dom.m = static_cast<Index>(N) * dom.n;

  const int d = dom.dim;
  Index nodes = 1;
  for (int k = 0; k < d; ++k) nodes *= (dom.m + 1);
  constexpr Index kNodeLimit = 40'000'000;
  if (nodes > kNodeLimit) {
    std::ostringstream os;
    os << "tiling refused: estimated DOF count " << 2 * nodes << " exceeds the resource limit";
    throw ConfigError(os.str());
  }

  dom.node_dof[0].assign(static_cast<std::size_t>(nodes), -1);
  dom.node_dof[1].assign(static_cast<std::size_t>(nodes), -1);
  dom.node_membrane.assign(static_cast<std::size_t>(nodes), -1);

  const Index m = dom.m;
  const Index mz = d == 3 ? m : 1;

  // Phase voxels and provisional phase-node marks.
  for (Index gz = 0; gz < mz; ++gz)
    for (Index gy = 0; gy < m; ++gy)
      for (Index gx = 0; gx < m; ++gx) {
        const int p = dom.label_at(gx, gy, gz) == kIntra ? 0 : 1;
        dom.phase_voxels[p].push_back(dom.voxel_index(gx, gy, gz));
        const Index qz = d == 3 ? 2 : 1;
        for (Index dz = 0; dz < qz; ++dz)
          for (Index dy = 0; dy < 2; ++dy)
            for (Index dx = 0; dx < 2; ++dx)
              dom.node_dof[p][static_cast<std::size_t>(dom.node_index(gx + dx, gy + dy, d == 3 ? gz + dz : 0))] = 0;
      }

  // Instance membrane faces cell by cell; mark membrane nodes.
  const Index cells = dom.cells();
  const auto& ufaces = dom.cell->faces;
  dom.faces.reserve(static_cast<std::size_t>(cells) * ufaces.size());
  for (Index k = 0; k < cells; ++k) {
    for (std::size_t f = 0; f < ufaces.size(); ++f) {
      GlobalFace gf;
      gf.cell = k;
      gf.unit_face = static_cast<std::int32_t>(f);
      gf.corner_count = ufaces[f].corner_count;
      gf.normal_axis = ufaces[f].normal_axis;
      gf.normal_sign = ufaces[f].normal_sign;
      for (int q = 0; q < gf.corner_count; ++q) {
        const Index gn = dom.global_node(k, ufaces[f].corners[static_cast<std::size_t>(q)]);
        dom.node_membrane[static_cast<std::size_t>(gn)] = 0;
        gf.mem_corners[static_cast<std::size_t>(q)] = static_cast<std::int32_t>(gn);  // node id for now
      }
      dom.faces.push_back(gf);
    }
  }

  // Membrane DOFs in increasing node order; membrane nodes carry both phase
  // DOFs regardless of element support.
  for (Index node = 0; node < nodes; ++node)
    if (dom.node_membrane[static_cast<std::size_t>(node)] == 0) {
      dom.node_membrane[static_cast<std::size_t>(node)] = static_cast<std::int32_t>(dom.membrane_nodes.size());
      dom.membrane_nodes.push_back(node);
      dom.node_dof[0][static_cast<std::size_t>(node)] = 0;
      dom.node_dof[1][static_cast<std::size_t>(node)] = 0;
    }

  for (int p = 0; p < 2; ++p) {
    Index next = 0;
    for (auto& v : dom.node_dof[p])
      if (v == 0) v = static_cast<std::int32_t>(next++);
    dom.ndof[p] = next;
  }

  for (auto& gf : dom.faces)
    for (int q = 0; q < gf.corner_count; ++q) {
      const auto node = static_cast<std::size_t>(gf.mem_corners[static_cast<std::size_t>(q)]);
      gf.mem_corners[static_cast<std::size_t>(q)] = dom.node_membrane[node];
    }

  dom.mem_to_i.resize(dom.membrane_nodes.size());
  dom.mem_to_e.resize(dom.membrane_nodes.size());
  for (std::size_t md = 0; md < dom.membrane_nodes.size(); ++md) {
    dom.mem_to_i[md] = dom.node_dof[0][static_cast<std::size_t>(dom.membrane_nodes[md])];
    dom.mem_to_e[md] = dom.node_dof[1][static_cast<std::size_t>(dom.membrane_nodes[md])];
  }

  const double hg = dom.h();
  dom.phase_volume[0] = static_cast<double>(dom.phase_voxels[0].size()) * std::pow(hg, d);
  dom.phase_volume[1] = static_cast<double>(dom.phase_voxels[1].size()) * std::pow(hg, d);
  dom.gamma_area = static_cast<double>(dom.faces.size()) * std::pow(hg, d - 1);

  return dom;
}

ConnectivityReport phase_connectivity(const UnitCell& cell, Phase phase) {
  ConnectivityReport rep;
  rep.phase = phase;
  const std::uint8_t want = phase == Phase::Intra ? kIntra : kExtra;
  const int n = cell.n;
  const int d = cell.dim;

  rep.component_of_voxel.assign(cell.labels.size(), -1);
  // Lift offsets: BFS assigns each voxel an unwrapped integer position; a
  // revisit with a mismatching offset along an axis means the component winds
  // around that axis.
  std::vector<std::array<int, 3>> offset(cell.labels.size(), {0, 0, 0});

  int comp = 0;
  for (Index start = 0; start < static_cast<Index>(cell.labels.size()); ++start) {
    if (cell.labels[static_cast<std::size_t>(start)] != want) continue;
    if (rep.component_of_voxel[static_cast<std::size_t>(start)] >= 0) continue;
    std::deque<Index> queue{start};
    rep.component_of_voxel[static_cast<std::size_t>(start)] = comp;
    offset[static_cast<std::size_t>(start)] = {0, 0, 0};
    while (!queue.empty()) {
      const Index v = queue.front();
      queue.pop_front();
      const int cx = static_cast<int>(v % n);
      const int cy = static_cast<int>((v / n) % n);
      const int cz = static_cast<int>(v / (static_cast<Index>(n) * n));
      const std::array<int, 3> c{cx, cy, cz};
      for (int a = 0; a < d; ++a)
        for (int dir = -1; dir <= 1; dir += 2) {
          std::array<int, 3> nb = c;
          int wrap = 0;
          nb[static_cast<std::size_t>(a)] += dir;
          if (nb[static_cast<std::size_t>(a)] < 0) {
            nb[static_cast<std::size_t>(a)] += n;
            wrap = -1;
          } else if (nb[static_cast<std::size_t>(a)] >= n) {
            nb[static_cast<std::size_t>(a)] -= n;
            wrap = +1;
          }
          const Index w = cell.voxel_index(nb[0], nb[1], d == 3 ? nb[2] : 0);
          if (cell.labels[static_cast<std::size_t>(w)] != want) continue;
          (void)wrap;
          // Unwrapped neighbour position; a revisit whose stored lift differs
          // (by a multiple of n) means the component winds around that axis.
          std::array<int, 3> lift = offset[static_cast<std::size_t>(v)];
          lift[static_cast<std::size_t>(a)] += dir;
          if (rep.component_of_voxel[static_cast<std::size_t>(w)] < 0) {
            rep.component_of_voxel[static_cast<std::size_t>(w)] = comp;
            offset[static_cast<std::size_t>(w)] = lift;
            queue.push_back(w);
          } else {
            for (int k = 0; k < d; ++k)
              if (lift[static_cast<std::size_t>(k)] != offset[static_cast<std::size_t>(w)][static_cast<std::size_t>(k)])
                rep.spans_axis[static_cast<std::size_t>(k)] = true;
          }
        }
    }
    ++comp;
  }
  rep.components = comp;
  rep.spans_all_axes = true;
  for (int k = 0; k < d; ++k) rep.spans_all_axes = rep.spans_all_axes && rep.spans_axis[static_cast<std::size_t>(k)];
  return rep;
}

void write_vtk_voxels(const UnitCell& cell, std::ostream& os) {
  const int n = cell.n;
  const int nz = cell.dim == 3 ? n : 1;
  os << "# vtk DataFile Version 3.0\n";
  os << "bidomain unit cell labels\n";
  os << "ASCII\n";
  os << "DATASET STRUCTURED_POINTS\n";
  os << "DIMENSIONS " << n + 1 << " " << n + 1 << " " << nz + (cell.dim == 3 ? 1 : 0) << "\n";
  os << "ORIGIN 0 0 0\n";
  os << "SPACING " << cell.h() << " " << cell.h() << " " << (cell.dim == 3 ? cell.h() : 1.0) << "\n";
  os << "CELL_DATA " << cell.labels.size() << "\n";
  os << "SCALARS phase int 1\n";
  os << "LOOKUP_TABLE default\n";
  for (auto l : cell.labels) os << static_cast<int>(l) << "\n";
}

}  // namespace bidomain
