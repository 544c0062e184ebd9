#include "bidomain/membrane.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace bidomain {

MembraneModel MembraneModel::classical_fhn(double a, double k, double epsilon) {
  MembraneModel m;
  // v(v-a)(v-1) = v^3 - (1+a) v^2 + a v
  m.i1 = {0.0, a, -(1.0 + a), 1.0};
  m.i2_const = 1.0;
  m.i2_lin = 0.0;
  m.hq = {0.0, epsilon * k, 0.0};
  m.ch1 = -epsilon;
  m.name = "classical FHN";
  return m;
}

double MembraneModel::max_abs_dIdv(double vlo, double vhi, double wlo, double whi) const {
  // dI/dv is quadratic in v and affine in w; extrema sit at box corners or at
  // the vertex of the quadratic.
  double best = 0.0;
  auto consider = [&](double v, double w) { best = std::max(best, std::abs(dI_dv(v, w))); };
  for (double w : {wlo, whi}) {
    consider(vlo, w);
    consider(vhi, w);
    if (std::abs(i1[3]) > 0.0) {
      const double vc = -2.0 * i1[2] / (6.0 * i1[3]);
      if (vc > vlo && vc < vhi) consider(vc, w);
    }
  }
  return best;
}

double MembraneModel::dt_ceiling(double vlo, double vhi, double wlo, double whi) const {
  const double m = max_abs_dIdv(vlo, vhi, wlo, whi);
  return m > 0.0 ? 0.1 / m : std::numeric_limits<double>::infinity();
}

StructureReport check_membrane_structure(const MembraneModel& model, const SampleBox& box,
                                         const std::vector<double>& mu_grid) {
  StructureReport rep;
  rep.quartic_ok = model.i1[3] > 0.0;

  const int ns = std::max(3, box.samples_per_axis);
  auto sample = [&](int i, double lo, double hi) { return lo + (hi - lo) * i / (ns - 1); };

  if (!rep.quartic_ok) {
    rep.warning = true;
    rep.message = "no quartic coercivity: leading cubic coefficient of I1 is not positive";
  } else {
    // v I - w H >= gamma v^4 - beta (v^2 + w^2) on the sample grid, with
    // gamma fixed at half the leading coefficient.
    rep.gamma = 0.5 * model.i1[3];
    double beta = 0.0;
    for (int i = 0; i < ns; ++i)
      for (int j = 0; j < ns; ++j) {
        const double v = sample(i, box.vlo, box.vhi);
        const double w = sample(j, box.wlo, box.whi);
        const double q = v * v + w * w;
        if (q < 1e-14) continue;
        const double lhs = v * model.current(v, w) - w * model.gating(v, w);
        const double need = (rep.gamma * v * v * v * v - lhs) / q;
        beta = std::max(beta, need);
      }
    rep.beta = beta;
  }

  rep.best_lambda = -std::numeric_limits<double>::infinity();
  for (double mu : mu_grid) {
    if (!(mu > 0.0)) continue;
    double lam = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ns; ++i)
      for (int j = 0; j < ns; ++j) {
        const double v = sample(i, box.vlo, box.vhi);
        const double w = sample(j, box.wlo, box.whi);
        // F = (mu I, -H); symmetric part of its Jacobian.
        const double a11 = mu * model.dI_dv(v, w);
        const double a12 = mu * model.dI_dw(v);
        const double a21 = -model.dH_dv(v);
        const double a22 = -model.dH_dw();
        Eigen::Matrix2d s;
        s << a11, 0.5 * (a12 + a21), 0.5 * (a12 + a21), a22;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(s);
        lam = std::min(lam, es.eigenvalues()(0));
      }
    if (lam > rep.best_lambda) {
      rep.best_lambda = lam;
      rep.best_mu = mu;
    }
  }
  return rep;
}

}  // namespace bidomain
