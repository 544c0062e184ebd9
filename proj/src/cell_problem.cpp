#include "bidomain/cell_problem.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <thread>

namespace bidomain {

namespace {

// Per-component constant modes on the periodic phase DOFs. Components come
// from periodic voxel connectivity; a node inherits the component of the
// first phase voxel touching it.
std::vector<std::vector<double>> component_modes(const UnitCell& cell, Phase phase,
                                                 const ConnectivityReport& rep) {
  const int pi = static_cast<int>(phase);
  const Index ndof = cell.periodic_ndof[pi];
  std::vector<int> dof_component(static_cast<std::size_t>(ndof), -1);
  const int n = cell.n;
  const int d = cell.dim;
  for (Index vox : cell.phase_voxels[pi]) {
    const int comp = rep.component_of_voxel[static_cast<std::size_t>(vox)];
    const int cx = static_cast<int>(vox % n);
    const int cy = static_cast<int>((vox / n) % n);
    const int cz = static_cast<int>(vox / (static_cast<Index>(n) * n));
    const int qz = d == 3 ? 2 : 1;
    for (int dz = 0; dz < qz; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const Index node = cell.periodic_lattice_index(cx + dx, cy + dy, cz + dz);
          const auto dof = cell.periodic_node_dof[pi][static_cast<std::size_t>(node)];
          if (dof >= 0 && dof_component[static_cast<std::size_t>(dof)] < 0)
            dof_component[static_cast<std::size_t>(dof)] = comp;
        }
  }
  std::vector<std::vector<double>> modes(static_cast<std::size_t>(rep.components));
  for (auto& m : modes) m.assign(static_cast<std::size_t>(ndof), 0.0);
  for (Index i = 0; i < ndof; ++i) {
    const int c = dof_component[static_cast<std::size_t>(i)];
    if (c >= 0) modes[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] = 1.0;
  }
  return modes;
}

// Subtracts the volume-weighted mean per component (exact Q1 integrals).
void pin_component_means(const PhaseMesh& mesh, const std::vector<std::vector<double>>& modes,
                         std::vector<double>& x) {
  const auto weights = lumped_volume(mesh);
  for (const auto& mode : modes) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += weights[i] * mode[i] * x[i];
      den += weights[i] * mode[i];
    }
    if (den <= 0.0) continue;
    const double mean = num / den;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= mean * mode[i];
  }
}

Eigen::MatrixXd sym_to_eigen(const SymTensor& t) {
  Eigen::MatrixXd m(t.dim, t.dim);
  for (int i = 0; i < t.dim; ++i)
    for (int j = 0; j < t.dim; ++j) m(i, j) = t(i, j);
  return m;
}

void run_tasks(int threads, std::vector<std::function<void()>>& tasks) {
  if (threads <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::vector<std::thread> pool;
  // Tasks are few; one thread per task up to the cap, round-robin.
  const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(threads), tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  for (std::size_t w = 0; w < nw; ++w)
    pool.emplace_back([&tasks, &errors, w, nw]() {
      for (std::size_t i = w; i < tasks.size(); i += nw) {
        try {
          tasks[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::string geometry_digest(const UnitCell& cell) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  mix(static_cast<std::uint64_t>(cell.dim));
  mix(static_cast<std::uint64_t>(cell.n));
  for (auto l : cell.labels) mix(l);
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

CorrectorField solve_corrector(const UnitCell& cell, Phase phase, const CellTensorSampler& sigma,
                               int direction, const SolveOptions& opts) {
  const int pi = static_cast<int>(phase);
  if (cell.phase_voxels[pi].empty())
    throw ConfigError(std::string("cell problem: phase ") + phase_name(phase) + " is empty");
  if (direction < 0 || direction >= cell.dim) throw ConfigError("cell problem: direction out of range");

  const PhaseMesh mesh = periodic_phase_mesh(cell, phase);
  const TensorSampler sampler = [&sigma](const Point& y) { return sigma(y); };
  const CsrMatrix A = assemble_stiffness(mesh, sampler);
  const std::vector<double> b = assemble_flux_load(mesh, sampler, direction);

  const ConnectivityReport rep = phase_connectivity(cell, phase);
  const auto modes = component_modes(cell, phase, rep);

  SolveOptions solve_opts = opts;
  solve_opts.nullspace = nullptr;
  solve_opts.nullspace_components = &modes;

  CorrectorField out;
  out.phase = phase;
  out.direction = direction;
  out.values.assign(static_cast<std::size_t>(mesh.ndof), 0.0);
  out.report = solve_spd(A, b, out.values, solve_opts);
  if (!out.report.converged) {
    std::ostringstream os;
    os << "corrector solve (phase " << phase_name(phase) << ", direction " << direction
       << ") did not converge: relative residual " << out.report.relative_residual << " after "
       << out.report.iterations << " iterations";
    throw NumericError(os.str());
  }
  pin_component_means(mesh, modes, out.values);
  return out;
}

namespace {

// M_j column k accumulated as the quadrature of sigma (e_k - grad chi^k).
void accumulate_tensor(const UnitCell& cell, Phase phase, const CellTensorSampler& sigma,
                       const std::vector<CorrectorField>& chis, SymTensor& M, SymTensor& sigma_mean) {
  const int d = cell.dim;
  const PhaseMesh mesh = periodic_phase_mesh(cell, phase);
  const int nc = 1 << d;
  const double g2[2] = {0.2113248654051871177454256097490, 0.7886751345948128822545743902510};
  const double vol = std::pow(mesh.h, d);
  const int npts = 1 << d;

  M.dim = d;
  sigma_mean.dim = d;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      M(i, j) = 0.0;
      sigma_mean(i, j) = 0.0;
    }

  for (Index e : mesh.elements) {
    Index c[3];
    mesh.voxel_coords(e, c);
    const Point o = mesh.voxel_origin(e);
    std::array<double, 8> chi_local[3];
    for (int k = 0; k < d; ++k)
      for (int q = 0; q < nc; ++q)
        chi_local[k][static_cast<std::size_t>(q)] =
            chis[static_cast<std::size_t>(k)].values[static_cast<std::size_t>(mesh.corner_dof(c, q & 1, (q >> 1) & 1, (q >> 2) & 1))];

    for (int p = 0; p < npts; ++p) {
      const std::array<double, 3> xi{g2[p & 1], d >= 2 ? g2[(p >> 1) & 1] : 0.0, d == 3 ? g2[(p >> 2) & 1] : 0.0};
      const Point yq{o[0] + xi[0] * mesh.h, o[1] + xi[1] * mesh.h, d == 3 ? o[2] + xi[2] * mesh.h : 0.0};
      const SymTensor s = sigma(yq);
      const double wq = vol / npts;

      // Physical gradients of the correctors at the quadrature point.
      double grad_chi[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
      for (int q = 0; q < nc; ++q) {
        const int kb[3] = {q & 1, (q >> 1) & 1, (q >> 2) & 1};
        double l[3] = {kb[0] ? xi[0] : 1 - xi[0], kb[1] ? xi[1] : 1 - xi[1], d == 3 ? (kb[2] ? xi[2] : 1 - xi[2]) : 1.0};
        for (int a = 0; a < d; ++a) {
          double gg = kb[a] ? 1.0 : -1.0;
          for (int b2 = 0; b2 < d; ++b2)
            if (b2 != a) gg *= l[b2];
          for (int k = 0; k < d; ++k) grad_chi[k][a] += chi_local[k][static_cast<std::size_t>(q)] * gg / mesh.h;
        }
      }

      for (int k = 0; k < d; ++k) {
        double ek_minus_grad[3] = {0, 0, 0};
        for (int a = 0; a < d; ++a) ek_minus_grad[a] = (a == k ? 1.0 : 0.0) - grad_chi[k][a];
        for (int i = 0; i < d; ++i) {
          double v = 0.0;
          for (int a = 0; a < d; ++a) v += s(i, a) * ek_minus_grad[a];
          M(i, k) += wq * v;
        }
      }
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) sigma_mean(i, j) += wq * s(i, j);
    }
  }
}

}  // namespace

EffectiveTensor effective_tensor(const UnitCell& cell, const CellTensorSampler& sigma_i,
                                 const CellTensorSampler& sigma_e, const SolveOptions& opts,
                                 int threads) {
  EffectiveTensor out;
  out.dim = cell.dim;
  out.resolution = cell.n;
  out.geometry_digest = geometry_digest(cell);
  out.correctors[0].resize(static_cast<std::size_t>(cell.dim));
  out.correctors[1].resize(static_cast<std::size_t>(cell.dim));

  std::vector<std::function<void()>> tasks;
  for (int p = 0; p < 2; ++p) {
    if (cell.phase_voxels[p].empty()) continue;  // empty phase: tensor stays zero
    for (int k = 0; k < cell.dim; ++k)
      tasks.push_back([&, p, k]() {
        const Phase ph = p == 0 ? Phase::Intra : Phase::Extra;
        const auto& sig = p == 0 ? sigma_i : sigma_e;
        out.correctors[p][static_cast<std::size_t>(k)] = solve_corrector(cell, ph, sig, k, opts);
      });
  }
  run_tasks(threads, tasks);

  for (int p = 0; p < 2; ++p) {
    if (cell.phase_voxels[p].empty()) {
      out.M[p].dim = cell.dim;
      out.sigma_mean[p].dim = cell.dim;
      continue;
    }
    const Phase ph = p == 0 ? Phase::Intra : Phase::Extra;
    accumulate_tensor(cell, ph, p == 0 ? sigma_i : sigma_e, out.correctors[p], out.M[p], out.sigma_mean[p]);
    for (const auto& c : out.correctors[p]) out.solver_iterations += c.report.iterations;
  }
  return out;
}

EffectiveTensor effective_tensor_at(const UnitCell& cell, const TensorField& sigma_i,
                                    const TensorField& sigma_e, const Point& xbar,
                                    const SolveOptions& opts, int threads) {
  const CellTensorSampler si = [&sigma_i, xbar](const Point& y) { return sigma_i(xbar, y); };
  const CellTensorSampler se = [&sigma_e, xbar](const Point& y) { return sigma_e(xbar, y); };
  return effective_tensor(cell, si, se, opts, threads);
}

TensorDiagnostics tensor_diagnostics(const EffectiveTensor& tensor, const UnitCell& cell, Phase phase) {
  TensorDiagnostics d;
  d.phase = phase;
  const int p = static_cast<int>(phase);
  const int dim = tensor.dim;
  const Eigen::MatrixXd M = sym_to_eigen(tensor.M[p]);

  d.symmetry_defect = (M - M.transpose()).cwiseAbs().maxCoeff();
  const Eigen::MatrixXd Msym = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Msym);
  for (int i = 0; i < dim; ++i) d.eigenvalues[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
  d.positive_definite = es.eigenvalues()(0) > 1e-10;

  const Eigen::MatrixXd slack = sym_to_eigen(tensor.sigma_mean[p]) - Msym;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(0.5 * (slack + slack.transpose()));
  d.voigt_slack_min = es2.eigenvalues()(0);

  d.expected_positive_definite = phase_connectivity(cell, phase).spans_all_axes;
  return d;
}

}  // namespace bidomain
