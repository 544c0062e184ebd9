#include "bidomain/micro.hpp"

#include <cmath>
#include <sstream>

namespace bidomain {

namespace {

Point fast_coordinate(const Point& x, double eps) {
  Point y;
  for (int a = 0; a < 3; ++a) {
    const double s = x[static_cast<std::size_t>(a)] / eps;
    y[static_cast<std::size_t>(a)] = s - std::floor(s);
  }
  return y;
}

ScalarSampler bind_fast_slow(const ScalarField& f, double eps) {
  if (!f) return {};
  return [f, eps](const Point& x) { return f(x, fast_coordinate(x, eps)); };
}

TensorSampler bind_fast_slow_tensor(const TensorField& f, double eps, int dim) {
  if (!f) return [dim](const Point&) { return SymTensor::identity(dim); };
  return [f, eps](const Point& x) { return f(x, fast_coordinate(x, eps)); };
}

}  // namespace

MicroSimulator::MicroSimulator(MicroConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.domain) throw ConfigError("micro: no domain");
  const TiledDomain& dom = *cfg_.domain;
  if (dom.faces.empty()) throw ConfigError("micro: membrane required, geometry has no interface");
  if (!(cfg_.dt > 0.0)) throw ConfigError("micro: dt must be positive");
  if (!(cfg_.T >= cfg_.dt)) throw ConfigError("micro: T must be at least dt");
  if (cfg_.snapshot_stride < 1) throw ConfigError("micro: snapshot stride must be >= 1");

  ni_ = dom.ndof[0];
  ne_ = dom.ndof[1];
  nm_ = dom.membrane_dof_count();

  const PhaseMesh mesh_i = phase_mesh(dom, Phase::Intra);
  const PhaseMesh mesh_e = phase_mesh(dom, Phase::Extra);
  A_i_ = assemble_stiffness(mesh_i, bind_fast_slow_tensor(cfg_.sigma_i, dom.eps, dom.dim));
  A_e_ = assemble_stiffness(mesh_e, bind_fast_slow_tensor(cfg_.sigma_e, dom.eps, dom.dim));
  M_gamma_ = assemble_surface_mass(surface_mesh(dom));
  lumped_i_ = lumped_volume(mesh_i);
  lumped_e_ = lumped_volume(mesh_e);

  // Loads with the compatibility projection: subtract the volume-weighted
  // joint mean so the assembled right side annihilates the constant mode.
  F_i_.assign(static_cast<std::size_t>(ni_), 0.0);
  F_e_.assign(static_cast<std::size_t>(ne_), 0.0);
  const ScalarSampler si = bind_fast_slow(cfg_.source_i, dom.eps);
  const ScalarSampler se = bind_fast_slow(cfg_.source_e, dom.eps);
  if (si) F_i_ = assemble_load(mesh_i, si);
  if (se) F_e_ = assemble_load(mesh_e, se);
  double total = 0.0;
  for (double v : F_i_) total += v;
  for (double v : F_e_) total += v;
  const double vol = dom.phase_volume[0] + dom.phase_volume[1];
  const double shift = total / vol;
  for (std::size_t i = 0; i < F_i_.size(); ++i) F_i_[i] -= shift * lumped_i_[i];
  for (std::size_t i = 0; i < F_e_.size(); ++i) F_e_[i] -= shift * lumped_e_[i];

  nullvec_.assign(static_cast<std::size_t>(ni_ + ne_), 1.0);

  double resid = 0.0, scale = 0.0;
  for (double v : F_i_) {
    resid += v;
    scale += v * v;
  }
  for (double v : F_e_) {
    resid += v;
    scale += v * v;
  }
  rhs_defect_ = std::abs(resid) / std::max(std::sqrt(scale), 1e-300);

  // Jacobi data of the coupled block operator.
  block_diag_.assign(static_cast<std::size_t>(ni_ + ne_), 0.0);
  const auto di = A_i_.diagonal();
  const auto de = A_e_.diagonal();
  for (Index i = 0; i < ni_; ++i) block_diag_[static_cast<std::size_t>(i)] = di[static_cast<std::size_t>(i)];
  for (Index i = 0; i < ne_; ++i) block_diag_[static_cast<std::size_t>(ni_ + i)] = de[static_cast<std::size_t>(i)];
  const double c = dom.eps / cfg_.dt;
  const auto dm = M_gamma_.diagonal();
  for (Index m = 0; m < nm_; ++m) {
    block_diag_[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])] += c * dm[static_cast<std::size_t>(m)];
    block_diag_[static_cast<std::size_t>(ni_ + dom.mem_to_e[static_cast<std::size_t>(m)])] += c * dm[static_cast<std::size_t>(m)];
  }
}

void MicroSimulator::apply_block(const double* x, double* y) const {
  const TiledDomain& dom = *cfg_.domain;
  const double c = dom.eps / cfg_.dt;
  A_i_.multiply(x, y);
  A_e_.multiply(x + ni_, y + ni_);
  // Membrane coupling: c * T' M (T_i u_i - T_e u_e) with opposite signs.
  std::vector<double> diff(static_cast<std::size_t>(nm_)), Md(static_cast<std::size_t>(nm_));
  for (Index m = 0; m < nm_; ++m)
    diff[static_cast<std::size_t>(m)] = x[dom.mem_to_i[static_cast<std::size_t>(m)]] -
                                        x[ni_ + dom.mem_to_e[static_cast<std::size_t>(m)]];
  M_gamma_.multiply(diff.data(), Md.data());
  for (Index m = 0; m < nm_; ++m) {
    y[dom.mem_to_i[static_cast<std::size_t>(m)]] += c * Md[static_cast<std::size_t>(m)];
    y[ni_ + dom.mem_to_e[static_cast<std::size_t>(m)]] -= c * Md[static_cast<std::size_t>(m)];
  }
}

void MicroSimulator::pin_extracellular_mean(std::vector<double>& ui, std::vector<double>& ue) const {
  double mean = 0.0;
  for (std::size_t i = 0; i < ue.size(); ++i) mean += lumped_e_[i] * ue[i];
  mean /= cfg_.domain->phase_volume[1];
  for (auto& v : ui) v -= mean;
  for (auto& v : ue) v -= mean;
}

MicroState MicroSimulator::init_state() const {
  const TiledDomain& dom = *cfg_.domain;
  MicroState s;
  s.t = 0.0;
  s.v.resize(static_cast<std::size_t>(nm_));
  s.w.resize(static_cast<std::size_t>(nm_));
  for (Index m = 0; m < nm_; ++m) {
    const Point x = dom.node_position(dom.membrane_nodes[static_cast<std::size_t>(m)]);
    const Point y = fast_coordinate(x, dom.eps);
    s.v[static_cast<std::size_t>(m)] = cfg_.v0 ? cfg_.v0(x, y) : 0.0;
    s.w[static_cast<std::size_t>(m)] = cfg_.w0 ? cfg_.w0(x, y) : 0.0;
  }

  // Elliptic initialization: minimize the conduction energy subject to
  // u_i - u_e = v0 on the membrane. Membrane i-DOFs are eliminated in favour
  // of the paired e-DOFs plus the prescribed jump.
  std::vector<std::int32_t> i_to_z(static_cast<std::size_t>(ni_), -1);
  std::vector<char> is_membrane_i(static_cast<std::size_t>(ni_), 0);
  for (Index m = 0; m < nm_; ++m) is_membrane_i[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])] = 1;
  Index n_int = 0;
  for (Index i = 0; i < ni_; ++i)
    if (!is_membrane_i[static_cast<std::size_t>(i)]) i_to_z[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(n_int++);
  const Index nz = n_int + ne_;

  // i-DOF -> membrane DOF (only for membrane i-DOFs).
  std::vector<std::int32_t> i_to_mem(static_cast<std::size_t>(ni_), -1);
  for (Index m = 0; m < nm_; ++m) i_to_mem[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])] = static_cast<std::int32_t>(m);

  auto lift = [&](const double* z, const double* jump, std::vector<double>& ui, std::vector<double>& ue) {
    ui.assign(static_cast<std::size_t>(ni_), 0.0);
    ue.assign(z + n_int, z + nz);
    for (Index i = 0; i < ni_; ++i) {
      const auto zi = i_to_z[static_cast<std::size_t>(i)];
      if (zi >= 0) {
        ui[static_cast<std::size_t>(i)] = z[zi];
      } else {
        const auto m = i_to_mem[static_cast<std::size_t>(i)];
        ui[static_cast<std::size_t>(i)] = ue[static_cast<std::size_t>(dom.mem_to_e[static_cast<std::size_t>(m)])] +
                                          (jump ? jump[m] : 0.0);
      }
    }
  };

  LinearOperator op;
  op.n = nz;
  std::vector<double> ui_buf, ue_buf, ri(static_cast<std::size_t>(ni_)), re(static_cast<std::size_t>(ne_));
  op.apply = [&](const double* z, double* y) {
    lift(z, nullptr, ui_buf, ue_buf);
    A_i_.multiply(ui_buf.data(), ri.data());
    A_e_.multiply(ue_buf.data(), re.data());
    for (Index i = 0; i < ni_; ++i) {
      const auto zi = i_to_z[static_cast<std::size_t>(i)];
      if (zi >= 0) y[zi] = ri[static_cast<std::size_t>(i)];
    }
    for (Index e = 0; e < ne_; ++e) y[n_int + e] = re[static_cast<std::size_t>(e)];
    for (Index m = 0; m < nm_; ++m)
      y[n_int + dom.mem_to_e[static_cast<std::size_t>(m)]] += ri[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])];
  };
  op.diag.assign(static_cast<std::size_t>(nz), 0.0);
  {
    const auto di = A_i_.diagonal();
    const auto de = A_e_.diagonal();
    for (Index i = 0; i < ni_; ++i) {
      const auto zi = i_to_z[static_cast<std::size_t>(i)];
      if (zi >= 0) op.diag[static_cast<std::size_t>(zi)] = di[static_cast<std::size_t>(i)];
    }
    for (Index e = 0; e < ne_; ++e) op.diag[static_cast<std::size_t>(n_int + e)] = de[static_cast<std::size_t>(e)];
    for (Index m = 0; m < nm_; ++m)
      op.diag[static_cast<std::size_t>(n_int + dom.mem_to_e[static_cast<std::size_t>(m)])] +=
          di[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])];
  }

  // Right side: loads minus the affine lift of the prescribed jump.
  std::vector<double> u_aff(static_cast<std::size_t>(ni_), 0.0);
  for (Index m = 0; m < nm_; ++m)
    u_aff[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])] = s.v[static_cast<std::size_t>(m)];
  std::vector<double> r_aff(static_cast<std::size_t>(ni_));
  A_i_.multiply(u_aff.data(), r_aff.data());
  std::vector<double> b(static_cast<std::size_t>(nz), 0.0);
  for (Index i = 0; i < ni_; ++i) {
    const auto zi = i_to_z[static_cast<std::size_t>(i)];
    if (zi >= 0) b[static_cast<std::size_t>(zi)] = F_i_[static_cast<std::size_t>(i)] - r_aff[static_cast<std::size_t>(i)];
  }
  for (Index e = 0; e < ne_; ++e) b[static_cast<std::size_t>(n_int + e)] = F_e_[static_cast<std::size_t>(e)];
  for (Index m = 0; m < nm_; ++m) {
    const auto i = dom.mem_to_i[static_cast<std::size_t>(m)];
    b[static_cast<std::size_t>(n_int + dom.mem_to_e[static_cast<std::size_t>(m)])] +=
        F_i_[static_cast<std::size_t>(i)] - r_aff[static_cast<std::size_t>(i)];
  }

  std::vector<double> ones(static_cast<std::size_t>(nz), 1.0);
  SolveOptions opts = cfg_.solver;
  opts.nullspace = &ones;
  opts.nullspace_components = nullptr;
  std::vector<double> z(static_cast<std::size_t>(nz), 0.0);
  const SolveReport rep = pcg(op, b, z, opts);
  if (!rep.converged) {
    std::ostringstream os;
    os << "initialization solve failed: relative residual " << rep.relative_residual << " after "
       << rep.iterations << " iterations";
    throw NumericError(os.str());
  }

  lift(z.data(), s.v.data(), s.ui, s.ue);
  pin_extracellular_mean(s.ui, s.ue);
  for (Index m = 0; m < nm_; ++m)
    s.v[static_cast<std::size_t>(m)] = s.ui[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])] -
                                       s.ue[static_cast<std::size_t>(dom.mem_to_e[static_cast<std::size_t>(m)])];
  return s;
}

void MicroSimulator::step(MicroState& s, StepLog* log) const {
  const TiledDomain& dom = *cfg_.domain;
  const double dt = cfg_.dt;
  const double eps = dom.eps;
  const double c = eps / dt;

  // Gating first (Gauss-Seidel), then the ionic current with the new w.
  std::vector<double> ion(static_cast<std::size_t>(nm_));
  for (Index m = 0; m < nm_; ++m) {
    const double v = s.v[static_cast<std::size_t>(m)];
    double& w = s.w[static_cast<std::size_t>(m)];
    w += dt * cfg_.membrane.gating(v, w);
    const double I = cfg_.membrane.current(v, w);
    if (!std::isfinite(I) || !std::isfinite(w)) {
      std::ostringstream os;
      os << "ionic evaluation produced a non-finite value at membrane DOF " << m << " (t = " << s.t << ")";
      throw NumericError(os.str());
    }
    ion[static_cast<std::size_t>(m)] = I;
  }

  // Membrane right side: c M v^n - eps M I.
  std::vector<double> mem_rhs(static_cast<std::size_t>(nm_)), Mr(static_cast<std::size_t>(nm_));
  for (Index m = 0; m < nm_; ++m)
    mem_rhs[static_cast<std::size_t>(m)] = c * s.v[static_cast<std::size_t>(m)] - eps * ion[static_cast<std::size_t>(m)];
  M_gamma_.multiply(mem_rhs.data(), Mr.data());

  std::vector<double> b(static_cast<std::size_t>(ni_ + ne_));
  for (Index i = 0; i < ni_; ++i) b[static_cast<std::size_t>(i)] = F_i_[static_cast<std::size_t>(i)];
  for (Index e = 0; e < ne_; ++e) b[static_cast<std::size_t>(ni_ + e)] = F_e_[static_cast<std::size_t>(e)];
  for (Index m = 0; m < nm_; ++m) {
    b[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])] += Mr[static_cast<std::size_t>(m)];
    b[static_cast<std::size_t>(ni_ + dom.mem_to_e[static_cast<std::size_t>(m)])] -= Mr[static_cast<std::size_t>(m)];
  }

  LinearOperator op;
  op.n = ni_ + ne_;
  op.apply = [this](const double* x, double* y) { apply_block(x, y); };
  op.diag = block_diag_;

  // Warm start from the previous potentials.
  std::vector<double> x(static_cast<std::size_t>(ni_ + ne_));
  std::copy(s.ui.begin(), s.ui.end(), x.begin());
  std::copy(s.ue.begin(), s.ue.end(), x.begin() + ni_);

  SolveOptions opts = cfg_.solver;
  opts.nullspace = &nullvec_;
  const SolveReport rep = pcg(op, b, x, opts);
  if (!rep.converged) {
    std::ostringstream os;
    os << "coupled step solve failed at t = " << s.t << ": relative residual " << rep.relative_residual
       << " after " << rep.iterations << " iterations";
    throw NumericError(os.str());
  }

  s.ui.assign(x.begin(), x.begin() + ni_);
  s.ue.assign(x.begin() + ni_, x.end());
  pin_extracellular_mean(s.ui, s.ue);
  for (Index m = 0; m < nm_; ++m)
    s.v[static_cast<std::size_t>(m)] = s.ui[static_cast<std::size_t>(dom.mem_to_i[static_cast<std::size_t>(m)])] -
                                       s.ue[static_cast<std::size_t>(dom.mem_to_e[static_cast<std::size_t>(m)])];
  s.t += dt;

  if (log) {
    log->t = s.t;
    log->cg_iterations = rep.iterations;
    log->cg_residual = rep.relative_residual;
    std::vector<double> Mv(static_cast<std::size_t>(nm_));
    M_gamma_.multiply(s.v.data(), Mv.data());
    double vv = 0.0;
    for (Index m = 0; m < nm_; ++m) vv += s.v[static_cast<std::size_t>(m)] * Mv[static_cast<std::size_t>(m)];
    M_gamma_.multiply(s.w.data(), Mv.data());
    double ww = 0.0;
    for (Index m = 0; m < nm_; ++m) ww += s.w[static_cast<std::size_t>(m)] * Mv[static_cast<std::size_t>(m)];
    log->v_l2_scaled = std::sqrt(eps * vv);
    log->w_l2_scaled = std::sqrt(eps * ww);
    log->surface_energy = eps * vv;
    log->grad_ui = h1_seminorm(phase_mesh(dom, Phase::Intra), s.ui);
    log->grad_ue = h1_seminorm(phase_mesh(dom, Phase::Extra), s.ue);
  }
}

MicroTrajectory MicroSimulator::run() const {
  MicroTrajectory traj;
  traj.eps = cfg_.domain->eps;
  traj.snapshot_dt = cfg_.dt * cfg_.snapshot_stride;
  MicroState s = init_state();
  traj.snapshots.push_back(s);
  const Index steps = static_cast<Index>(std::floor(cfg_.T / cfg_.dt + 1e-9));
  for (Index k = 1; k <= steps; ++k) {
    StepLog log;
    log.step = k;
    step(s, &log);
    traj.log.push_back(log);
    if (k % cfg_.snapshot_stride == 0) traj.snapshots.push_back(s);
  }
  return traj;
}

double MicroSimulator::rhs_nullspace_defect() const { return rhs_defect_; }

MicroTrajectory run_micro(const MicroConfig& cfg) { return MicroSimulator(cfg).run(); }

EstimateReport micro_monitors(const MicroTrajectory& traj, const MicroConfig& cfg,
                              const std::vector<int>& shift_multiples) {
  if (traj.snapshots.size() < 2) throw ConfigError("monitors need at least two snapshots");
  const TiledDomain& dom = *cfg.domain;
  const double eps = dom.eps;
  const double dt = traj.snapshot_dt;
  const std::size_t ns = traj.snapshots.size();

  const PhaseMesh mesh_i = phase_mesh(dom, Phase::Intra);
  const PhaseMesh mesh_e = phase_mesh(dom, Phase::Extra);
  const SurfaceMesh surf = surface_mesh(dom);
  const CsrMatrix M = assemble_surface_mass(surf);

  auto trapezoid_weight = [&](std::size_t k) { return (k == 0 || k == ns - 1) ? 0.5 * dt : dt; };
  auto surface_l2sq = [&](const std::vector<double>& f) {
    std::vector<double> Mf(f.size());
    M.multiply(f.data(), Mf.data());
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * Mf[i];
    return s;
  };

  EstimateReport rep;
  double l4_acc = 0.0;
  for (std::size_t k = 0; k < ns; ++k) {
    const auto& s = traj.snapshots[k];
    const double wt = trapezoid_weight(k);
    const double gi = h1_seminorm(mesh_i, s.ui);
    const double ge = h1_seminorm(mesh_e, s.ue);
    rep.grad_l2l2[0] += wt * gi * gi;
    rep.grad_l2l2[1] += wt * ge * ge;
    const double li = l2_volume_norm(mesh_i, s.ui);
    const double le = l2_volume_norm(mesh_e, s.ue);
    rep.l2l2[0] += wt * li * li;
    rep.l2l2[1] += wt * le * le;
    rep.v_linf_l2_scaled = std::max(rep.v_linf_l2_scaled, std::sqrt(eps * surface_l2sq(s.v)));
    rep.w_linf_l2_scaled = std::max(rep.w_linf_l2_scaled, std::sqrt(eps * surface_l2sq(s.w)));
    const double l4 = l4_surface_norm(surf, s.v);
    l4_acc += wt * l4 * l4 * l4 * l4;
  }
  for (int p = 0; p < 2; ++p) {
    rep.grad_l2l2[p] = std::sqrt(rep.grad_l2l2[p]);
    rep.l2l2[p] = std::sqrt(rep.l2l2[p]);
  }
  rep.v_l4l4_scaled = std::pow(eps * l4_acc, 0.25);

  double dtw_acc = 0.0;
  std::vector<double> quot(traj.snapshots.front().w.size());
  for (std::size_t k = 1; k < ns; ++k) {
    for (std::size_t i = 0; i < quot.size(); ++i)
      quot[i] = (traj.snapshots[k].w[i] - traj.snapshots[k - 1].w[i]) / dt;
    dtw_acc += dt * surface_l2sq(quot);
  }
  rep.dtw_l2l2_scaled = std::sqrt(eps * dtw_acc);

  for (int mult : shift_multiples) {
    if (mult < 1 || static_cast<std::size_t>(mult) >= ns) continue;
    double acc = 0.0;
    std::vector<double> diff(traj.snapshots.front().v.size());
    const std::size_t last = ns - static_cast<std::size_t>(mult);
    for (std::size_t k = 0; k < last; ++k) {
      for (std::size_t i = 0; i < diff.size(); ++i)
        diff[i] = traj.snapshots[k + static_cast<std::size_t>(mult)].v[i] - traj.snapshots[k].v[i];
      const double wt = (k == 0 || k == last - 1) ? 0.5 * dt : dt;
      acc += wt * surface_l2sq(diff);
    }
    rep.translation.emplace_back(mult * dt, eps * acc);
  }
  return rep;
}

}  // namespace bidomain
