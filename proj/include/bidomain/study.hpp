#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bidomain/cell_problem.hpp"
#include "bidomain/geometry.hpp"
#include "bidomain/macro.hpp"
#include "bidomain/membrane.hpp"
#include "bidomain/micro.hpp"
#include "bidomain/types.hpp"

namespace bidomain {

/// Homogenization experiment: one macro reference run, micro runs across the
/// epsilon ladder, convergence metrics between them.
struct StudyConfig {
  CellGeometrySpec geometry;
  TensorField sigma_i, sigma_e;  // empty: identity
  ScalarField v0, w0;
  ScalarField source_i, source_e;
  MembraneModel membrane;
  std::vector<int> tilings;  // 1/eps values, strictly increasing
  double dt{2e-3};
  double T{0.2};
  int snapshot_stride{5};
  Index macro_resolution{0};   // 0: 4 * finest tiling
  int tensor_resolution{0};    // cell-problem resolution; 0: geometry resolution
  SolveOptions solver;
  int threads{1};
  std::string config_hash;  // provenance, carried into reports
};

struct EpsRow {
  double eps{0};
  double e_eps{0};        // time-integrated strong metric
  double e_eps_final{0};  // final-time variant
  double unfolded_l2{0};  // same quantity measured on Omega x Gamma
  double avg_err_ui{0}, avg_err_ue{0};
  double energy_micro_i{0}, energy_micro_e{0};
  double order_e{0};  // observed order vs the previous row
};

struct ConvergenceReport {
  std::vector<EpsRow> rows;
  double energy_macro_i{0}, energy_macro_e{0};
  SymTensor M_i, M_e;
  double gamma_area{0}, vol_i{0}, vol_e{0};
  Index macro_resolution{0};
  std::string config_hash;
  std::string version;
};

ConvergenceReport run_study(const StudyConfig& cfg);

void write_report_csv(const ConvergenceReport& rep, std::ostream& os);
void write_report_json(const ConvergenceReport& rep, std::ostream& os);
ConvergenceReport read_report_json(std::istream& is);

/// Cell averages of fast-slow data (macroscopic source and initial-data
/// conventions).
SpaceFunc cell_average_volume(const std::shared_ptr<const UnitCell>& cell, Phase phase, const ScalarField& f);
SpaceFunc cell_average_surface(const std::shared_ptr<const UnitCell>& cell, const ScalarField& f);

}  // namespace bidomain
