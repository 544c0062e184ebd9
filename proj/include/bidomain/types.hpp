#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidomain {

using Index = std::int64_t;

/// Physical point; unused trailing coordinates are zero in 2D.
using Point = std::array<double, 3>;

/// Configuration / validation problem. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (solver breakdown, ellipticity violation, NaN guard).
/// CLI maps this to exit code 1.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Small symmetric d-by-d matrix value (conductivity sample, effective tensor).
struct SymTensor {
  int dim{2};
  std::array<std::array<double, 3>, 3> a{};

  static SymTensor identity(int d) {
    SymTensor t;
    t.dim = d;
    for (int i = 0; i < d; ++i) t.a[i][i] = 1.0;
    return t;
  }
  static SymTensor scaled_identity(int d, double s) {
    SymTensor t = identity(d);
    for (int i = 0; i < d; ++i) t.a[i][i] = s;
    return t;
  }
  static SymTensor diagonal(int d, const std::array<double, 3>& e) {
    SymTensor t;
    t.dim = d;
    for (int i = 0; i < d; ++i) t.a[i][i] = e[static_cast<std::size_t>(i)];
    return t;
  }

  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }
  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }

  /// eta . (A eta)
  double quad(const std::array<double, 3>& eta) const {
    double s = 0.0;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) s += eta[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * eta[static_cast<std::size_t>(j)];
    return s;
  }

  SymTensor scaled(double s) const {
    SymTensor t = *this;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) t(i, j) *= s;
    return t;
  }
};

/// Eigenvalues (ascending) of the symmetric part, closed forms for d <= 3.
std::array<double, 3> sym_eigenvalues(const SymTensor& t);

/// sigma_j(x, y): slow variable x in Omega, fast variable y in the unit cell.
using TensorField = std::function<SymTensor(const Point& x, const Point& y)>;

/// Scalar data with the same fast/slow structure (sources, initial data).
using ScalarField = std::function<double(const Point& x, const Point& y)>;

inline TensorField constant_tensor(const SymTensor& t) {
  return [t](const Point&, const Point&) { return t; };
}

enum class Phase { Intra = 0, Extra = 1 };

inline const char* phase_name(Phase p) { return p == Phase::Intra ? "i" : "e"; }
inline Phase other_phase(Phase p) { return p == Phase::Intra ? Phase::Extra : Phase::Intra; }

/// Tags which DOF map a vector of values is indexed by.
enum class FieldSpace { PhaseI, PhaseE, Membrane, Grid };

struct Field {
  FieldSpace space{FieldSpace::Grid};
  std::vector<double> values;

  Index size() const { return static_cast<Index>(values.size()); }
};

inline void require_space(const Field& f, FieldSpace s, const char* where) {
  if (f.space != s) throw ConfigError(std::string(where) + ": field is bound to a different DOF map");
}

}  // namespace bidomain
