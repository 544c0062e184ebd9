#include "bidomain/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace bidomain {

void CsrMatrix::multiply(const double* x, double* y) const {
  for (Index r = 0; r < rows; ++r) {
    double s = 0.0;
    for (Index k = row_ptr[static_cast<std::size_t>(r)]; k < row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
      s += val[static_cast<std::size_t>(k)] * x[col[static_cast<std::size_t>(k)]];
    y[r] = s;
  }
}

std::vector<double> CsrMatrix::multiply(const std::vector<double>& x) const {
  std::vector<double> y(static_cast<std::size_t>(rows), 0.0);
  multiply(x.data(), y.data());
  return y;
}

std::vector<double> CsrMatrix::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(rows), 0.0);
  for (Index r = 0; r < rows; ++r)
    for (Index k = row_ptr[static_cast<std::size_t>(r)]; k < row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
      if (col[static_cast<std::size_t>(k)] == r) d[static_cast<std::size_t>(r)] = val[static_cast<std::size_t>(k)];
  return d;
}

CsrMatrix TripletBuilder::build() {
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    if (a.r != b.r) return a.r < b.r;
    if (a.c != b.c) return a.c < b.c;
    return a.seq < b.seq;
  });
  CsrMatrix A;
  A.rows = rows_;
  A.cols = cols_;
  A.row_ptr.assign(static_cast<std::size_t>(rows_) + 1, 0);
  std::size_t i = 0;
  while (i < entries_.size()) {
    std::size_t j = i;
    double s = 0.0;
    while (j < entries_.size() && entries_[j].r == entries_[i].r && entries_[j].c == entries_[i].c) {
      s += entries_[j].v;
      ++j;
    }
    A.col.push_back(entries_[i].c);
    A.val.push_back(s);
    A.row_ptr[static_cast<std::size_t>(entries_[i].r) + 1]++;
    i = j;
  }
  for (Index r = 0; r < rows_; ++r)
    A.row_ptr[static_cast<std::size_t>(r) + 1] += A.row_ptr[static_cast<std::size_t>(r)];
  return A;
}

LinearOperator as_operator(const CsrMatrix& A) {
  LinearOperator op;
  op.n = A.rows;
  op.diag = A.diagonal();
  op.apply = [&A](const double* x, double* y) { A.multiply(x, y); };
  return op;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

namespace {

void project_out(const std::vector<double>& z, double zz, std::vector<double>& v) {
  const double c = dot(z, v) / zz;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * z[i];
}

}  // namespace

SolveReport pcg(const LinearOperator& A, const std::vector<double>& b, std::vector<double>& x,
                const SolveOptions& opts) {
  const Index n = A.n;
  SolveReport rep;
  if (x.size() != static_cast<std::size_t>(n)) x.assign(static_cast<std::size_t>(n), 0.0);

  // Collect the (mutually orthogonal) nullspace vectors.
  std::vector<const std::vector<double>*> zs;
  if (opts.nullspace) zs.push_back(opts.nullspace);
  if (opts.nullspace_components)
    for (const auto& z : *opts.nullspace_components) zs.push_back(&z);
  std::vector<double> zz(zs.size());
  for (std::size_t k = 0; k < zs.size(); ++k) zz[k] = dot(*zs[k], *zs[k]);

  auto project_all = [&](std::vector<double>& v) {
    for (std::size_t k = 0; k < zs.size(); ++k) project_out(*zs[k], zz[k], v);
  };

  std::vector<double> rhs = b;
  if (!zs.empty()) {
    rep.projected = true;
    const double bnorm0 = norm2(rhs);
    if (opts.check_consistency && bnorm0 > 0.0) {
      for (std::size_t k = 0; k < zs.size(); ++k) {
        const double comp = std::abs(dot(*zs[k], rhs)) / std::sqrt(zz[k]);
        if (comp > opts.consistency_tolerance * bnorm0 && comp > opts.consistency_floor) {
          std::ostringstream os;
          os << "singular system inconsistent: nullspace component " << comp
             << " exceeds tolerance relative to |b| = " << bnorm0;
          throw NumericError(os.str());
        }
      }
    }
    project_all(rhs);
    project_all(x);
  }

  const double bnorm = norm2(rhs);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    rep.converged = true;
    return rep;
  }

  std::vector<double> r(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n)),
      p(static_cast<std::size_t>(n)), Ap(static_cast<std::size_t>(n));
  A.apply(x.data(), Ap.data());
  for (Index i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = rhs[static_cast<std::size_t>(i)] - Ap[static_cast<std::size_t>(i)];
  project_all(r);

  auto precondition = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (Index i = 0; i < n; ++i) {
      const double d = A.diag[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] = d > 0.0 ? in[static_cast<std::size_t>(i)] / d : in[static_cast<std::size_t>(i)];
    }
    project_all(out);
  };

  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  const Index max_iter = opts.max_iterations > 0
                             ? opts.max_iterations
                             : static_cast<Index>(10.0 * std::ceil(std::sqrt(static_cast<double>(n)))) + 10;

  double rnorm = norm2(r);
  for (Index it = 0; it < max_iter; ++it) {
    if (rnorm <= opts.tolerance * bnorm) break;
    A.apply(p.data(), Ap.data());
    if (!zs.empty()) project_all(Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) {
      rep.iterations = it;
      rep.relative_residual = rnorm / bnorm;
      rep.converged = false;
      return rep;  // breakdown: not positive definite on the residual space
    }
    const double alpha = rz / pAp;
    for (Index i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] += alpha * p[static_cast<std::size_t>(i)];
      r[static_cast<std::size_t>(i)] -= alpha * Ap[static_cast<std::size_t>(i)];
    }
    if (!zs.empty()) {
      project_all(x);
      project_all(r);
    }
    precondition(r, z);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (Index i = 0; i < n; ++i)
      p[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i)] + beta * p[static_cast<std::size_t>(i)];
    rnorm = norm2(r);
    rep.iterations = it + 1;
  }
  rep.relative_residual = rnorm / bnorm;
  rep.converged = rnorm <= opts.tolerance * bnorm;
  return rep;
}

SolveReport solve_spd(const CsrMatrix& A, const std::vector<double>& b, std::vector<double>& x,
                      const SolveOptions& opts) {
  return pcg(as_operator(A), b, x, opts);
}

void write_matrix_market(const CsrMatrix& A, std::ostream& os) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << A.rows << " " << A.cols << " " << A.nnz() << "\n";
  char buf[64];
  for (Index r = 0; r < A.rows; ++r)
    for (Index k = A.row_ptr[static_cast<std::size_t>(r)]; k < A.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%lld %d %.17g\n", static_cast<long long>(r + 1),
                    A.col[static_cast<std::size_t>(k)] + 1, A.val[static_cast<std::size_t>(k)]);
      os << buf;
    }
}

}  // namespace bidomain
