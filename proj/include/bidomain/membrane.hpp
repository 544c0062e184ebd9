#pragma once

#include <array>
#include <string>

#include "bidomain/types.hpp"

namespace bidomain {

/// Polynomial two-variable membrane model:
///   I(v, w) = I1(v) + I2(v) w,  I1 cubic, I2 affine,
///   H(v, w) = h(v) + ch1 w,     h quadratic.
struct MembraneModel {
  std::array<double, 4> i1{0, 0, 0, 0};  // I1 = i1[0] + i1[1] v + i1[2] v^2 + i1[3] v^3
  double i2_const{0};
  double i2_lin{0};
  std::array<double, 3> hq{0, 0, 0};  // h = hq[0] + hq[1] v + hq[2] v^2
  double ch1{0};
  std::string name{"custom"};

  /// I = v(v-a)(v-1) + w,  H = epsilon (k v - w).
  static MembraneModel classical_fhn(double a = 0.1, double k = 0.5, double epsilon = 0.01);

  double current(double v, double w) const {
    const double p = i1[0] + v * (i1[1] + v * (i1[2] + v * i1[3]));
    return p + (i2_const + i2_lin * v) * w;
  }
  double gating(double v, double w) const { return hq[0] + v * (hq[1] + v * hq[2]) + ch1 * w; }

  double dI_dv(double v, double w) const { return i1[1] + v * (2.0 * i1[2] + 3.0 * i1[3] * v) + i2_lin * w; }
  double dI_dw(double v) const { return i2_const + i2_lin * v; }
  double dH_dv(double v) const { return hq[1] + 2.0 * hq[2] * v; }
  double dH_dw() const { return ch1; }

  /// max |dI/dv| over [vlo,vhi] x [wlo,whi]; gives the documented explicit
  /// time-step ceiling dt <= 0.1 / max|dI/dv|.
  double max_abs_dIdv(double vlo, double vhi, double wlo, double whi) const;
  double dt_ceiling(double vlo = -2.0, double vhi = 2.0, double wlo = -2.0, double whi = 2.0) const;
};

/// Numeric scan of the structural assumptions behind energy estimates and
/// uniqueness: dissipativity constants (gamma, beta) and the one-sided bound
/// on the symmetric part of the (mu I, -H) Jacobian.
struct StructureReport {
  bool quartic_ok{false};  // I1 has a positive leading coefficient
  double gamma{0};
  double beta{0};
  double best_mu{0};
  double best_lambda{0};  // min eigenvalue of sym grad F^mu over the box, maximized over mu
  bool warning{false};
  std::string message;
};

struct SampleBox {
  double vlo{-2}, vhi{2};
  double wlo{-2}, whi{2};
  int samples_per_axis{41};
};

StructureReport check_membrane_structure(const MembraneModel& model, const SampleBox& box,
                                         const std::vector<double>& mu_grid);

}  // namespace bidomain
