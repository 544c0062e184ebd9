#pragma once

#include <functional>
#include <vector>

#include "bidomain/fe.hpp"
#include "bidomain/geometry.hpp"
#include "bidomain/types.hpp"

namespace bidomain {

/// Field on a product set Omega x Gamma or Omega x Y_j: per epsilon-cell
/// arrays of values at the reference-cell sample points, piecewise constant
/// in x within each cell.
struct UnfoldedField {
  enum class Target { BoundaryGamma, VolumeIntra, VolumeExtra };
  Target target{Target::BoundaryGamma};
  double eps{1.0};
  Index cells{1};
  Index points_per_cell{0};
  std::vector<double> values;  // cell-major: values[k * points_per_cell + p]

  double& at(Index cell, Index point) { return values[static_cast<std::size_t>(cell * points_per_cell + point)]; }
  double at(Index cell, Index point) const {
    return values[static_cast<std::size_t>(cell * points_per_cell + point)];
  }
};

/// Exact re-indexing of a membrane field onto Omega x Gamma.
UnfoldedField unfold_boundary(const Field& v, const TiledDomain& dom);

/// Exact re-indexing of a phase field onto Omega x Y_j.
UnfoldedField unfold_volume(const Field& u, const TiledDomain& dom, Phase phase);

/// Restriction of a volume-unfolded field to the membrane sample points.
UnfoldedField restrict_to_membrane(const UnfoldedField& f, const TiledDomain& dom, Phase phase);

double unfolded_l2(const UnfoldedField& f, const TiledDomain& dom);
/// L2 norm of the y-gradient of a volume-unfolded field.
double unfolded_h1y(const UnfoldedField& f, const TiledDomain& dom);

/// Gagliardo double-sum H^{1/2} seminorm over Gamma per cell (face-midpoint
/// collocation, diagonal excluded), integrated over x. Refuses surfaces whose
/// pair count exceeds the given budget.
double unfolded_h12_gagliardo(const UnfoldedField& f, const TiledDomain& dom,
                              Index max_pair_evaluations = 200'000'000);

/// Cellwise averages over Y_j and their Q1 interpolation on Omega
/// (cell-center grid, clamped at the boundary ring).
struct CellAverageInterpolant {
  int dim{2};
  int N{1};
  double eps{1.0};
  std::vector<double> cell_means;  // N^dim, x fastest
  double operator()(const Point& x) const;
};

CellAverageInterpolant local_average_and_interpolant(const Field& u, const TiledDomain& dom, Phase phase);

/// || T_b(v sampled on Gamma_eps) - v ||_{L2(Omega x Gamma)} for a smooth
/// x-resolved comparison function (strong-convergence direction).
double boundary_unfolding_defect(const TiledDomain& dom, const std::function<double(const Point&)>& v_smooth);

/// Identity suite on random fields: integration formula, norm identity,
/// product rule, gradient scaling, trace compatibility.
struct UnfoldIdentityReport {
  double integration_formula_defect{0};
  double boundary_norm_defect{0};
  double product_rule_defect{0};
  double gradient_scaling_defect{0};
  double trace_compatibility_defect{0};
  double volume_norm_defect{0};
  bool passed{false};
  double tolerance{1e-12};
};

UnfoldIdentityReport run_unfold_identity_suite(const std::shared_ptr<const UnitCell>& cell,
                                               const std::vector<int>& tilings, unsigned seed = 20240607);

}  // namespace bidomain
