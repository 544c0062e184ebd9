#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "bidomain/types.hpp"

namespace bidomain {

/// Compressed-row sparse matrix. Entries within a row are column-sorted and
/// unique; accumulation order is fixed by the builder, so assembly is
/// bit-deterministic.
struct CsrMatrix {
  Index rows{0}, cols{0};
  std::vector<Index> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<double> val;

  void multiply(const double* x, double* y) const;
  std::vector<double> multiply(const std::vector<double>& x) const;
  std::vector<double> diagonal() const;
  Index nnz() const { return static_cast<Index>(val.size()); }
};

/// Coordinate-format accumulator; duplicate entries are summed in insertion
/// order after a stable sort, keeping results independent of thread count.
class TripletBuilder {
public:
  TripletBuilder(Index rows, Index cols) : rows_(rows), cols_(cols) {}
  void add(Index r, Index c, double v) {
    entries_.push_back({r, static_cast<std::int32_t>(c), static_cast<std::int32_t>(seq_++), v});
  }
  CsrMatrix build();

private:
  struct Entry {
    Index r;
    std::int32_t c;
    std::int32_t seq;
    double v;
  };
  Index rows_, cols_;
  std::int64_t seq_{0};
  std::vector<Entry> entries_;
};

struct SolveOptions {
  double tolerance{1e-10};
  Index max_iterations{0};  // 0: 10 * sqrt(n)
  /// Optional constant-mode descriptor; the right side, the initial guess and
  /// every iterate are projected against it.
  const std::vector<double>* nullspace{nullptr};
  /// Additional mutually orthogonal nullspace vectors (per-component constant
  /// modes); projected the same way.
  const std::vector<std::vector<double>>* nullspace_components{nullptr};
  /// Relative size of the nullspace component of b above which the singular
  /// system is reported inconsistent. Components below the absolute floor are
  /// treated as assembly rounding noise.
  double consistency_tolerance{1e-8};
  double consistency_floor{1e-13};
  bool check_consistency{true};
};

struct SolveReport {
  Index iterations{0};
  double relative_residual{0};
  bool converged{false};
  bool projected{false};
};

/// Matrix-free symmetric positive (semi)definite operator.
struct LinearOperator {
  Index n{0};
  std::function<void(const double* x, double* y)> apply;
  std::vector<double> diag;  // Jacobi preconditioner data
};

LinearOperator as_operator(const CsrMatrix& A);

/// Jacobi-preconditioned conjugate gradients with optional constant-mode
/// projection. `x` carries the initial guess on entry.
SolveReport pcg(const LinearOperator& A, const std::vector<double>& b, std::vector<double>& x,
                const SolveOptions& opts);

SolveReport solve_spd(const CsrMatrix& A, const std::vector<double>& b, std::vector<double>& x,
                      const SolveOptions& opts);

/// Matrix Market coordinate-format export (debugging aid).
void write_matrix_market(const CsrMatrix& A, std::ostream& os);

// Small dense helpers shared by assembly and reporting.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

}  // namespace bidomain
