#include "bidomain/types.hpp"

#include <algorithm>
#include <cmath>

namespace bidomain {

std::array<double, 3> sym_eigenvalues(const SymTensor& t) {
  std::array<double, 3> out{0, 0, 0};
  if (t.dim == 1) {
    out[0] = t(0, 0);
    return out;
  }
  if (t.dim == 2) {
    const double a = t(0, 0), d = t(1, 1);
    const double b = 0.5 * (t(0, 1) + t(1, 0));
    const double tr = a + d;
    const double disc = std::sqrt(std::max(0.0, 0.25 * (a - d) * (a - d) + b * b));
    out[0] = 0.5 * tr - disc;
    out[1] = 0.5 * tr + disc;
    return out;
  }
  // 3x3: trigonometric form on the symmetrized matrix.
  double a[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a[i][j] = 0.5 * (t(i, j) + t(j, i));
  const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
  double p2 = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double v = a[i][j] - (i == j ? q : 0.0);
      p2 += v * v;
    }
  const double p = std::sqrt(p2 / 6.0);
  if (p < 1e-300) {
    out = {q, q, q};
    return out;
  }
  double b[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b[i][j] = (a[i][j] - (i == j ? q : 0.0)) / p;
  const double detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                      b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                      b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
  const double r = std::clamp(detb / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  out[2] = q + 2.0 * p * std::cos(phi);
  out[0] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  out[1] = 3.0 * q - out[0] - out[2];
  std::sort(out.begin(), out.begin() + 3);
  return out;
}

}  // namespace bidomain
