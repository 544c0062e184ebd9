#include "bidomain/study.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "bidomain/unfolding.hpp"
#include "bidomain/version.hpp"

namespace bidomain {

namespace {

using nlohmann::json;

// 2-point Gauss abscissae on [0,1].
constexpr double kG2[2] = {0.2113248654051871177454256097490, 0.7886751345948128822545743902510};

void validate(const StudyConfig& cfg) {
  if (cfg.tilings.empty()) throw ConfigError("study: eps list must not be empty");
  for (std::size_t k = 0; k < cfg.tilings.size(); ++k) {
    if (cfg.tilings[k] < 1) throw ConfigError("study: eps must be 1/N with integer N >= 1");
    if (k > 0 && cfg.tilings[k] <= cfg.tilings[k - 1])
      throw ConfigError("study: eps list must be strictly decreasing");
  }
  if (!(cfg.dt > 0.0) || !(cfg.T >= cfg.dt)) throw ConfigError("study: invalid time parameters");
}

double trapezoid_weight(std::size_t k, std::size_t n, double dt) {
  return (k == 0 || k == n - 1) ? 0.5 * dt : dt;
}

// Strong metric pieces at one snapshot: squared surface misfit of the nodal
// difference between micro v and the sampled macro v.
double surface_misfit_sq(const SurfaceMesh& surf, const std::vector<double>& diff) {
  const double nrm = l2_surface_norm(surf, diff);
  return nrm * nrm;
}

}  // namespace

SpaceFunc cell_average_volume(const std::shared_ptr<const UnitCell>& cell, Phase phase, const ScalarField& f) {
  if (!f) return {};
  const PhaseMesh mesh = unit_closed_phase_mesh(*cell, phase);
  const double volume = cell->volume(phase);
  return [cell, mesh, volume, f](const Point& x) {
    // Quadrature of f(x, .) over the phase part of the reference cell.
    const int d = mesh.dim;
    const int npts = 1 << d;
    double acc = 0.0;
    for (Index e : mesh.elements) {
      Index c[3];
      mesh.voxel_coords(e, c);
      const Point o{c[0] * mesh.h, c[1] * mesh.h, d == 3 ? c[2] * mesh.h : 0.0};
      for (int p = 0; p < npts; ++p) {
        const Point y{o[0] + kG2[p & 1] * mesh.h, o[1] + kG2[(p >> 1) & 1] * mesh.h,
                      d == 3 ? o[2] + kG2[(p >> 2) & 1] * mesh.h : 0.0};
        acc += f(x, y) * std::pow(mesh.h, d) / npts;
      }
    }
    return acc / volume;
  };
}

SpaceFunc cell_average_surface(const std::shared_ptr<const UnitCell>& cell, const ScalarField& f) {
  if (!f) return {};
  return [cell, f](const Point& x) {
    const int d = cell->dim;
    const double h = cell->h();
    const double area = std::pow(h, d - 1);
    const int npts = 1 << (d - 1);
    double acc = 0.0;
    for (const auto& face : cell->faces) {
      int t1 = -1, t2 = -1;
      for (int a = 0; a < d; ++a)
        if (a != face.normal_axis) (t1 < 0 ? t1 : t2) = a;
      const auto& base = face.corners[0];
      for (int p = 0; p < npts; ++p) {
        Point y{base[0] * h, base[1] * h, d == 3 ? base[2] * h : 0.0};
        y[static_cast<std::size_t>(t1)] += kG2[p & 1] * h;
        if (d == 3) y[static_cast<std::size_t>(t2)] += kG2[(p >> 1) & 1] * h;
        acc += f(x, y) * area / npts;
      }
    }
    return acc / cell->gamma_area;
  };
}

ConvergenceReport run_study(const StudyConfig& cfg) {
  validate(cfg);
  auto cell = std::make_shared<const UnitCell>(build_unit_cell(cfg.geometry));
  if (cell->faces.empty()) throw ConfigError("study: membrane required, the geometry has no interface");

  const int n_max = cfg.tilings.back();
  Index m_mac = cfg.macro_resolution > 0 ? cfg.macro_resolution : static_cast<Index>(4 * n_max);
  for (int N : cfg.tilings)
    if (m_mac % N != 0)
      throw ConfigError("study: macro resolution must be a multiple of every 1/eps in the ladder");

  // Effective tensors from the cell problems (x-independent convention; the
  // conductivity is frozen at the domain center). The cell problems may run
  // at a finer resolution than the per-cell micro grid.
  const Point center{0.5, 0.5, cfg.geometry.dim == 3 ? 0.5 : 0.0};
  const TensorField sig_i = cfg.sigma_i ? cfg.sigma_i : constant_tensor(SymTensor::identity(cfg.geometry.dim));
  const TensorField sig_e = cfg.sigma_e ? cfg.sigma_e : constant_tensor(SymTensor::identity(cfg.geometry.dim));
  EffectiveTensor tensors;
  if (cfg.tensor_resolution > 0 && cfg.tensor_resolution != cfg.geometry.resolution) {
    CellGeometrySpec fine = cfg.geometry;
    fine.resolution = cfg.tensor_resolution;
    const UnitCell tensor_cell = build_unit_cell(fine);
    tensors = effective_tensor_at(tensor_cell, sig_i, sig_e, center, cfg.solver, cfg.threads);
  } else {
    tensors = effective_tensor_at(*cell, sig_i, sig_e, center, cfg.solver, cfg.threads);
  }

  // Solver-tolerance asymmetry is noise; the homogenized tensors of symmetric
  // conductivities are symmetric.
  auto symmetrize = [](SymTensor t) {
    for (int i = 0; i < t.dim; ++i)
      for (int j = i + 1; j < t.dim; ++j) {
        const double m = 0.5 * (t(i, j) + t(j, i));
        t(i, j) = t(j, i) = m;
      }
    return t;
  };

  ConvergenceReport rep;
  rep.M_i = symmetrize(tensors.M[0]);
  rep.M_e = symmetrize(tensors.M[1]);
  rep.gamma_area = cell->gamma_area;
  rep.vol_i = cell->volume_i;
  rep.vol_e = cell->volume_e;
  rep.macro_resolution = m_mac;
  rep.config_hash = cfg.config_hash;
  rep.version = kArtifactVersion;

  // Macro reference run.
  MacroConfig mac;
  mac.dim = cfg.geometry.dim;
  mac.resolution = m_mac;
  mac.tensor_i = [M = rep.M_i](const Point&) { return M; };
  mac.tensor_e = [M = rep.M_e](const Point&) { return M; };
  mac.gamma_area = cell->gamma_area;
  mac.vol_i = cell->volume_i;
  mac.vol_e = cell->volume_e;
  const SpaceFunc si_avg = cell_average_volume(cell, Phase::Intra, cfg.source_i);
  const SpaceFunc se_avg = cell_average_volume(cell, Phase::Extra, cfg.source_e);
  if (si_avg) mac.source_i = [si_avg](double, const Point& x) { return si_avg(x); };
  if (se_avg) mac.source_e = [se_avg](double, const Point& x) { return se_avg(x); };
  mac.v0 = cell_average_surface(cell, cfg.v0);
  mac.w0 = cell_average_surface(cell, cfg.w0);
  mac.membrane = cfg.membrane;
  mac.dt = cfg.dt;
  mac.T = cfg.T;
  mac.snapshot_stride = cfg.snapshot_stride;
  mac.solver = cfg.solver;
  MacroSimulator macro_sim(mac);
  const MacroTrajectory macro_traj = macro_sim.run();
  const std::size_t ns = macro_traj.snapshots.size();
  const double sdt = macro_traj.snapshot_dt;

  // Macro energies.
  for (std::size_t k = 0; k < ns; ++k) {
    const auto& s = macro_traj.snapshots[k];
    const double wt = trapezoid_weight(k, ns, sdt);
    std::vector<double> tmp(s.ui.size());
    macro_sim.stiffness(Phase::Intra).multiply(s.ui.data(), tmp.data());
    double ei = 0.0;
    for (std::size_t i = 0; i < tmp.size(); ++i) ei += s.ui[i] * tmp[i];
    macro_sim.stiffness(Phase::Extra).multiply(s.ue.data(), tmp.data());
    double ee = 0.0;
    for (std::size_t i = 0; i < tmp.size(); ++i) ee += s.ue[i] * tmp[i];
    rep.energy_macro_i += wt * ei;
    rep.energy_macro_e += wt * ee;
  }

  rep.rows.resize(cfg.tilings.size());

  auto run_one = [&](std::size_t idx) {
    const int N = cfg.tilings[static_cast<std::size_t>(idx)];
    auto dom = std::make_shared<const TiledDomain>(tile_domain(cell, N));
    MicroConfig mc;
    mc.domain = dom;
    mc.sigma_i = sig_i;
    mc.sigma_e = sig_e;
    mc.source_i = cfg.source_i;
    mc.source_e = cfg.source_e;
    mc.v0 = cfg.v0;
    mc.w0 = cfg.w0;
    mc.membrane = cfg.membrane;
    mc.dt = cfg.dt;
    mc.T = cfg.T;
    mc.snapshot_stride = cfg.snapshot_stride;
    mc.solver = cfg.solver;
    MicroSimulator sim(mc);
    const MicroTrajectory traj = sim.run();
    if (traj.snapshots.size() != ns) throw NumericError("study: snapshot counts diverged");

    EpsRow row;
    row.eps = dom->eps;

    const SurfaceMesh surf = surface_mesh(*dom);
    const PhaseMesh macro_grid = macro_sim.grid();

    double e_acc = 0.0, unf_acc = 0.0;
    double avg_ui_acc = 0.0, avg_ue_acc = 0.0;
    for (std::size_t k = 0; k < ns; ++k) {
      const auto& ms = traj.snapshots[k];
      const auto& Ms = macro_traj.snapshots[k];
      const double wt = trapezoid_weight(k, ns, sdt);

      // Macro v sampled on the membrane nodes (Q1 interpolation in x).
      Field diff;
      diff.space = FieldSpace::Membrane;
      diff.values.resize(ms.v.size());
      for (Index md = 0; md < dom->membrane_dof_count(); ++md) {
        const Point x = dom->node_position(dom->membrane_nodes[static_cast<std::size_t>(md)]);
        diff.values[static_cast<std::size_t>(md)] =
            ms.v[static_cast<std::size_t>(md)] - eval_grid_field(macro_grid, Ms.v, x);
      }
      const double misfit = dom->eps * surface_misfit_sq(surf, diff.values);
      e_acc += wt * misfit;
      if (k == ns - 1) row.e_eps_final = std::sqrt(misfit);
      const double unf = unfolded_l2(unfold_boundary(diff, *dom), *dom);
      unf_acc += wt * unf * unf;

      // Local-average misfits, integrated per macro element (each element
      // lies inside one eps-cell by the resolution constraint).
      const auto avg_i = local_average_and_interpolant(
          Field{FieldSpace::PhaseI, ms.ui}, *dom, Phase::Intra);
      const auto avg_e = local_average_and_interpolant(
          Field{FieldSpace::PhaseE, ms.ue}, *dom, Phase::Extra);
      double ai = 0.0, ae = 0.0;
      const int d = dom->dim;
      const int npts = 1 << d;
      const double hv = std::pow(macro_grid.h, d) / npts;
      for (Index e = 0; e < static_cast<Index>(macro_grid.elements.size()); ++e) {
        Index c[3];
        macro_grid.voxel_coords(e, c);
        for (int p = 0; p < npts; ++p) {
          const Point xq{(c[0] + kG2[p & 1]) * macro_grid.h, (c[1] + kG2[(p >> 1) & 1]) * macro_grid.h,
                         d == 3 ? (c[2] + kG2[(p >> 2) & 1]) * macro_grid.h : 0.0};
          const Index cx = std::min<Index>(static_cast<Index>(xq[0] / dom->eps), N - 1);
          const Index cy = std::min<Index>(static_cast<Index>(xq[1] / dom->eps), N - 1);
          const Index cz = d == 3 ? std::min<Index>(static_cast<Index>(xq[2] / dom->eps), N - 1) : 0;
          const Index cidx = cx + static_cast<Index>(N) * (cy + static_cast<Index>(N) * cz);
          const double mui = avg_i.cell_means[static_cast<std::size_t>(cidx)];
          const double mue = avg_e.cell_means[static_cast<std::size_t>(cidx)];
          const double umac_i = eval_grid_field(macro_grid, Ms.ui, xq);
          const double umac_e = eval_grid_field(macro_grid, Ms.ue, xq);
          ai += hv * (mui - umac_i) * (mui - umac_i);
          ae += hv * (mue - umac_e) * (mue - umac_e);
        }
      }
      avg_ui_acc += wt * ai;
      avg_ue_acc += wt * ae;

      // Micro energies.
      std::vector<double> tmp(ms.ui.size());
      sim.stiffness(Phase::Intra).multiply(ms.ui.data(), tmp.data());
      double ei = 0.0;
      for (std::size_t i = 0; i < tmp.size(); ++i) ei += ms.ui[i] * tmp[i];
      tmp.resize(ms.ue.size());
      sim.stiffness(Phase::Extra).multiply(ms.ue.data(), tmp.data());
      double ee = 0.0;
      for (std::size_t i = 0; i < tmp.size(); ++i) ee += ms.ue[i] * tmp[i];
      row.energy_micro_i += wt * ei;
      row.energy_micro_e += wt * ee;
    }
    row.e_eps = std::sqrt(e_acc);
    row.unfolded_l2 = std::sqrt(unf_acc);
    row.avg_err_ui = std::sqrt(avg_ui_acc);
    row.avg_err_ue = std::sqrt(avg_ue_acc);
    rep.rows[static_cast<std::size_t>(idx)] = row;
  };

  if (cfg.threads > 1 && cfg.tilings.size() > 1) {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(cfg.tilings.size());
    const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), cfg.tilings.size());
    for (std::size_t w = 0; w < nw; ++w)
      pool.emplace_back([&, w]() {
        for (std::size_t i = w; i < cfg.tilings.size(); i += nw) {
          try {
            run_one(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < cfg.tilings.size(); ++i) run_one(i);
  }

  for (std::size_t k = 1; k < rep.rows.size(); ++k) {
    const double ratio_eps = rep.rows[k - 1].eps / rep.rows[k].eps;
    if (rep.rows[k].e_eps > 0.0 && rep.rows[k - 1].e_eps > 0.0)
      rep.rows[k].order_e = std::log(rep.rows[k - 1].e_eps / rep.rows[k].e_eps) / std::log(ratio_eps);
  }
  return rep;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_report_csv(const ConvergenceReport& rep, std::ostream& os) {
  os << "eps,e_eps,unfolded_L2,avg_err_ui,avg_err_ue,energy_micro_i,energy_micro_e,energy_macro_i,"
        "energy_macro_e,order_e\n";
  for (const auto& r : rep.rows) {
    os << fmt(r.eps) << ',' << fmt(r.e_eps) << ',' << fmt(r.unfolded_l2) << ',' << fmt(r.avg_err_ui) << ','
       << fmt(r.avg_err_ue) << ',' << fmt(r.energy_micro_i) << ',' << fmt(r.energy_micro_e) << ','
       << fmt(rep.energy_macro_i) << ',' << fmt(rep.energy_macro_e) << ',' << fmt(r.order_e) << '\n';
  }
}

namespace {

json tensor_to_json(const SymTensor& t) {
  json rows = json::array();
  for (int i = 0; i < t.dim; ++i) {
    json row = json::array();
    for (int j = 0; j < t.dim; ++j) row.push_back(t(i, j));
    rows.push_back(row);
  }
  return rows;
}

SymTensor tensor_from_json(const json& j) {
  SymTensor t;
  t.dim = static_cast<int>(j.size());
  for (int i = 0; i < t.dim; ++i)
    for (int jx = 0; jx < t.dim; ++jx) t(i, jx) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(jx)].get<double>();
  return t;
}

}  // namespace

void write_report_json(const ConvergenceReport& rep, std::ostream& os) {
  json j;
  j["version"] = rep.version;
  j["config_hash"] = rep.config_hash;
  j["macro_resolution"] = rep.macro_resolution;
  j["gamma_area"] = rep.gamma_area;
  j["vol_i"] = rep.vol_i;
  j["vol_e"] = rep.vol_e;
  j["M_i"] = tensor_to_json(rep.M_i);
  j["M_e"] = tensor_to_json(rep.M_e);
  j["energy_macro_i"] = rep.energy_macro_i;
  j["energy_macro_e"] = rep.energy_macro_e;
  j["rows"] = json::array();
  for (const auto& r : rep.rows) {
    json row;
    row["eps"] = r.eps;
    row["e_eps"] = r.e_eps;
    row["e_eps_final"] = r.e_eps_final;
    row["unfolded_L2"] = r.unfolded_l2;
    row["avg_err_ui"] = r.avg_err_ui;
    row["avg_err_ue"] = r.avg_err_ue;
    row["energy_micro_i"] = r.energy_micro_i;
    row["energy_micro_e"] = r.energy_micro_e;
    row["order_e"] = r.order_e;
    j["rows"].push_back(row);
  }
  os << j.dump(2) << "\n";
}

ConvergenceReport read_report_json(std::istream& is) {
  json j;
  is >> j;
  ConvergenceReport rep;
  rep.version = j.at("version").get<std::string>();
  rep.config_hash = j.at("config_hash").get<std::string>();
  rep.macro_resolution = j.at("macro_resolution").get<Index>();
  rep.gamma_area = j.at("gamma_area").get<double>();
  rep.vol_i = j.at("vol_i").get<double>();
  rep.vol_e = j.at("vol_e").get<double>();
  rep.M_i = tensor_from_json(j.at("M_i"));
  rep.M_e = tensor_from_json(j.at("M_e"));
  rep.energy_macro_i = j.at("energy_macro_i").get<double>();
  rep.energy_macro_e = j.at("energy_macro_e").get<double>();
  for (const auto& row : j.at("rows")) {
    EpsRow r;
    r.eps = row.at("eps").get<double>();
    r.e_eps = row.at("e_eps").get<double>();
    r.e_eps_final = row.at("e_eps_final").get<double>();
    r.unfolded_l2 = row.at("unfolded_L2").get<double>();
    r.avg_err_ui = row.at("avg_err_ui").get<double>();
    r.avg_err_ue = row.at("avg_err_ue").get<double>();
    r.energy_micro_i = row.at("energy_micro_i").get<double>();
    r.energy_micro_e = row.at("energy_micro_e").get<double>();
    r.order_e = row.at("order_e").get<double>();
    rep.rows.push_back(r);
  }
  return rep;
}

}  // namespace bidomain
