#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "bidomain/fe.hpp"
#include "bidomain/geometry.hpp"
#include "bidomain/sparse.hpp"

namespace bidomain {

/// Conductivity on the reference cell at a fixed macroscopic point.
using CellTensorSampler = std::function<SymTensor(const Point& y)>;

/// Periodic corrector for one phase and coordinate direction, mean-zero on
/// every connected component.
struct CorrectorField {
  Phase phase{Phase::Intra};
  int direction{0};
  std::vector<double> values;  // periodic phase DOFs
  SolveReport report;
};

struct EffectiveTensor {
  int dim{2};
  std::array<SymTensor, 2> M{};           // by phase
  std::array<SymTensor, 2> sigma_mean{};  // integral of sigma over Y_j
  std::array<std::vector<CorrectorField>, 2> correctors;
  std::string geometry_digest;
  int resolution{0};
  Index solver_iterations{0};  // summed over all corrector solves
};

struct TensorDiagnostics {
  Phase phase{Phase::Intra};
  double symmetry_defect{0};
  std::array<double, 3> eigenvalues{};  // ascending; only dim entries used
  double voigt_slack_min{0};            // min eigenvalue of (sigma_mean - M)
  bool positive_definite{false};
  bool expected_positive_definite{false};  // phase spans all axes periodically
};

CorrectorField solve_corrector(const UnitCell& cell, Phase phase, const CellTensorSampler& sigma,
                               int direction, const SolveOptions& opts = {});

EffectiveTensor effective_tensor(const UnitCell& cell, const CellTensorSampler& sigma_i,
                                 const CellTensorSampler& sigma_e, const SolveOptions& opts = {},
                                 int threads = 1);

/// Effective tensors for x-dependent conductivities, frozen at xbar.
EffectiveTensor effective_tensor_at(const UnitCell& cell, const TensorField& sigma_i,
                                    const TensorField& sigma_e, const Point& xbar,
                                    const SolveOptions& opts = {}, int threads = 1);

TensorDiagnostics tensor_diagnostics(const EffectiveTensor& tensor, const UnitCell& cell, Phase phase);

/// FNV-1a digest of the voxel labels (provenance).
std::string geometry_digest(const UnitCell& cell);

}  // namespace bidomain
