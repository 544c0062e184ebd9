#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>
#include <sstream>

#include "bidomain/sparse.hpp"

using namespace bidomain;

namespace {

CsrMatrix dense_to_csr(const Eigen::MatrixXd& M) {
  TripletBuilder tb(M.rows(), M.cols());
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c)
      if (M(r, c) != 0.0) tb.add(r, c, M(r, c));
  return tb.build();
}

// Dense pseudo-inverse oracle for small singular symmetric systems.
Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const auto& vals = es.eigenvalues();
  const auto& vecs = es.eigenvectors();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  for (Eigen::Index k = 0; k < vals.size(); ++k)
    if (std::abs(vals(k)) > 1e-12) x += vecs.col(k) * (vecs.col(k).dot(b) / vals(k));
  return x;
}

}  // namespace

TEST_CASE("identity converges in one iteration") {
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(5, 5);
  CsrMatrix A = dense_to_csr(I);
  std::vector<double> b{1, -2, 3, 0.5, 4};
  std::vector<double> x;
  const auto rep = solve_spd(A, b, x, {});
  CHECK(rep.converged);
  CHECK(rep.iterations <= 1);
  for (int i = 0; i < 5; ++i) CHECK(x[static_cast<std::size_t>(i)] == doctest::Approx(b[static_cast<std::size_t>(i)]).epsilon(1e-14));
}

TEST_CASE("diagonal system") {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(2, 2);
  D(0, 0) = 2;
  D(1, 1) = 1;
  CsrMatrix A = dense_to_csr(D);
  std::vector<double> b{2, 1}, x;
  const auto rep = solve_spd(A, b, x, {});
  CHECK(rep.converged);
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("singular path Laplacian matches the dense pseudo-inverse") {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(3, 3);
  L << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CsrMatrix A = dense_to_csr(L);
  std::vector<double> b{1, -1, 0};
  std::vector<double> ns(3, 1.0);
  SolveOptions opts;
  opts.nullspace = &ns;
  opts.tolerance = 1e-14;
  std::vector<double> x;
  const auto rep = solve_spd(A, b, x, opts);
  CHECK(rep.converged);
  CHECK(rep.projected);

  Eigen::VectorXd bb(3);
  bb << 1, -1, 0;
  const Eigen::VectorXd ref = pinv_solve(L, bb);
  for (int i = 0; i < 3; ++i) CHECK(x[static_cast<std::size_t>(i)] == doctest::Approx(ref(i)).epsilon(1e-10));
}

TEST_CASE("longer singular chain against the oracle") {
  const int n = 8;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    L(i, i) += 1;
    L(i + 1, i + 1) += 1;
    L(i, i + 1) -= 1;
    L(i + 1, i) -= 1;
  }
  CsrMatrix A = dense_to_csr(L);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-1, 1);
  Eigen::VectorXd bb(n);
  for (int i = 0; i < n; ++i) bb(i) = dist(rng);
  bb.array() -= bb.mean();  // consistent right side
  std::vector<double> b(bb.data(), bb.data() + n), x;
  std::vector<double> ns(static_cast<std::size_t>(n), 1.0);
  SolveOptions opts;
  opts.nullspace = &ns;
  opts.tolerance = 1e-14;
  const auto rep = solve_spd(A, b, x, opts);
  CHECK(rep.converged);
  const Eigen::VectorXd ref = pinv_solve(L, bb);
  for (int i = 0; i < n; ++i) CHECK(x[static_cast<std::size_t>(i)] == doctest::Approx(ref(i)).epsilon(1e-9));
}

TEST_CASE("inconsistent singular system is reported") {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(3, 3);
  L << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CsrMatrix A = dense_to_csr(L);
  std::vector<double> b{1, 1, 1};  // fully in the nullspace
  std::vector<double> ns(3, 1.0);
  SolveOptions opts;
  opts.nullspace = &ns;
  std::vector<double> x;
  CHECK_THROWS_AS(solve_spd(A, b, x, opts), NumericError);
}

TEST_CASE("solver is deterministic") {
  const int n = 50;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    M(i, i) = 2.0 + dist(rng);
    if (i + 1 < n) {
      M(i, i + 1) = -0.5;
      M(i + 1, i) = -0.5;
    }
  }
  CsrMatrix A = dense_to_csr(M);
  std::vector<double> b(static_cast<std::size_t>(n));
  for (auto& v : b) v = dist(rng);
  std::vector<double> x1, x2;
  const auto r1 = solve_spd(A, b, x1, {});
  const auto r2 = solve_spd(A, b, x2, {});
  CHECK(r1.iterations == r2.iterations);
  for (int i = 0; i < n; ++i) CHECK(x1[static_cast<std::size_t>(i)] == x2[static_cast<std::size_t>(i)]);
}

TEST_CASE("non-convergence is reported, not thrown") {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(40, 40);
  for (int i = 0; i < 40; ++i) {
    M(i, i) = 2.0;
    if (i + 1 < 40) {
      M(i, i + 1) = -1.0;
      M(i + 1, i) = -1.0;
    }
  }
  CsrMatrix A = dense_to_csr(M);
  std::vector<double> b(40, 1.0), x;
  SolveOptions opts;
  opts.tolerance = 1e-15;
  opts.max_iterations = 2;
  const auto rep = solve_spd(A, b, x, opts);
  CHECK_FALSE(rep.converged);
  CHECK(rep.iterations == 2);
  CHECK(rep.relative_residual > 0.0);
}

TEST_CASE("triplet accumulation sums duplicates deterministically") {
  TripletBuilder tb(2, 2);
  tb.add(0, 0, 1.0);
  tb.add(0, 0, 2.0);
  tb.add(1, 1, 0.5);
  tb.add(0, 1, -1.0);
  const CsrMatrix A = tb.build();
  CHECK(A.nnz() == 3);
  const auto d = A.diagonal();
  CHECK(d[0] == 3.0);
  CHECK(d[1] == 0.5);
}

TEST_CASE("matrix market export") {
  TripletBuilder tb(2, 2);
  tb.add(0, 0, 1.5);
  tb.add(1, 0, -2.0);
  const CsrMatrix A = tb.build();
  std::ostringstream os;
  write_matrix_market(A, os);
  const std::string s = os.str();
  CHECK(s.find("%%MatrixMarket matrix coordinate real general") == 0);
  CHECK(s.find("2 2 2") != std::string::npos);
  CHECK(s.find("1 1 1.5") != std::string::npos);
  CHECK(s.find("2 1 -2") != std::string::npos);
}
