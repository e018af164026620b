#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "magrobin/eigsolve.hpp"

using magrobin::SolveOptions;
using magrobin::Spectrum;
using magrobin::SymmetricOperatorPair;

namespace {

Eigen::SparseMatrix<double> sparse_identity(int n) {
  Eigen::SparseMatrix<double> I(n, n);
  I.setIdentity();
  return I;
}

Eigen::SparseMatrix<double> tridiag_matrix(const Eigen::VectorXd& diag,
                                           const Eigen::VectorXd& off) {
  const int n = static_cast<int>(diag.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * n);
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, i, diag[i]);
    if (i + 1 < n) {
      trip.emplace_back(i, i + 1, off[i]);
      trip.emplace_back(i + 1, i, off[i]);
    }
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

// second-order Dirichlet stencil for -u'' + V(x) u on (x0, x1), n interior nodes
SymmetricOperatorPair fd2_pair(double x0, double x1, int n,
                               double (*V)(double) = nullptr) {
  const double h = (x1 - x0) / (n + 1);
  Eigen::VectorXd d(n), e(n - 1);
  for (int i = 0; i < n; ++i) {
    const double x = x0 + (i + 1) * h;
    d[i] = 2.0 / (h * h) + (V ? V(x) : 0.0);
  }
  e.setConstant(-1.0 / (h * h));
  return {tridiag_matrix(d, e), sparse_identity(n)};
}

// P1 finite elements for -u'' + V u on (0,1), V piecewise constant on 10 panels,
// Robin weight -0.5 at the free left end, Dirichlet right end.  Element-exact
// integration, so spaces on grids with N divisible by 10 are nested.
SymmetricOperatorPair fem_step_pair(int N) {
  static const double panel[10] = {0.3, -0.1, 0.7, 0.2, -0.4, 0.05, 0.6, -0.2, 0.15, 0.45};
  const double h = 1.0 / N;
  const int n = N;  // nodes 0..N-1 (node N is clamped)
  Eigen::VectorXd ad = Eigen::VectorXd::Zero(n), ae = Eigen::VectorXd::Zero(n - 1);
  Eigen::VectorXd md = Eigen::VectorXd::Zero(n), me = Eigen::VectorXd::Zero(n - 1);
  for (int el = 0; el < N; ++el) {
    const double xm = (el + 0.5) * h;
    const double Ve = panel[std::min(static_cast<int>(xm * 10.0), 9)];
    const double k = 1.0 / h;
    const double m2 = h / 3.0, m1 = h / 6.0;
    const int a = el, b = el + 1;
    if (a < n) {
      ad[a] += k + Ve * m2;
      md[a] += m2;
    }
    if (b < n) {
      ad[b] += k + Ve * m2;
      md[b] += m2;
      ae[a] += -k + Ve * m1;
      me[a] += m1;
    }
  }
  ad[0] += -0.5;  // boundary term
  return {tridiag_matrix(ad, ae), tridiag_matrix(md, me)};
}

double oscillator_V(double x) { return x * x; }

}  // namespace

TEST_CASE("Dirichlet Laplacian lowest three eigenvalues", "[eigsolve]") {
  const auto pair = fd2_pair(0.0, 1.0, 2000);
  const Spectrum s = magrobin::solve_tridiagonal(pair, 3);
  const double pi2 = M_PI * M_PI;
  REQUIRE(s.eigenvalues.size() == 3);
  CHECK(std::abs(s.eigenvalues[0] - pi2) <= 1e-5 * pi2);
  CHECK(std::abs(s.eigenvalues[1] - 4 * pi2) <= 1e-5 * 4 * pi2);
  CHECK(std::abs(s.eigenvalues[2] - 9 * pi2) <= 1e-5 * 9 * pi2);
  for (double r : s.residuals) CHECK(r <= s.meta.tolerance);
  CHECK(s.meta.solver.find("bisection") != std::string::npos);
}

TEST_CASE("identity pair returns 1 exactly", "[eigsolve]") {
  SymmetricOperatorPair pair{sparse_identity(5), sparse_identity(5)};
  const Spectrum s = magrobin::solve_tridiagonal(pair, 1);
  REQUIRE(s.eigenvalues.size() == 1);
  CHECK(std::abs(s.eigenvalues[0] - 1.0) <= 1e-12);
}

TEST_CASE("harmonic oscillator lowest two eigenvalues", "[eigsolve]") {
  const auto pair = fd2_pair(-12.0, 12.0, 4800, &oscillator_V);
  const Spectrum s = magrobin::solve_tridiagonal(pair, 2);
  CHECK(std::abs(s.eigenvalues[0] - 1.0) <= 1e-5);
  CHECK(std::abs(s.eigenvalues[1] - 3.0) <= 3e-5);
}

TEST_CASE("2D Dirichlet Laplacian via shift-invert", "[eigsolve]") {
  const int N = 200;  // interior nodes per direction
  const double h = 1.0 / (N + 1);
  const int n = N * N;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * n);
  auto id = [N](int i, int j) { return i * N + j; };
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      trip.emplace_back(id(i, j), id(i, j), 4.0 / (h * h));
      if (i + 1 < N) {
        trip.emplace_back(id(i, j), id(i + 1, j), -1.0 / (h * h));
        trip.emplace_back(id(i + 1, j), id(i, j), -1.0 / (h * h));
      }
      if (j + 1 < N) {
        trip.emplace_back(id(i, j), id(i, j + 1), -1.0 / (h * h));
        trip.emplace_back(id(i, j + 1), id(i, j), -1.0 / (h * h));
      }
    }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  SymmetricOperatorPair pair{A, sparse_identity(n)};
  const Spectrum s = magrobin::solve_sparse(pair, 2, 0.0);
  const double pi2 = M_PI * M_PI;
  CHECK(std::abs(s.eigenvalues[0] - 2 * pi2) <= 1e-3 * 2 * pi2);
  CHECK(std::abs(s.eigenvalues[1] - 5 * pi2) <= 1e-3 * 5 * pi2);
  CHECK(s.meta.solver.find("lanczos") != std::string::npos);
  CHECK(s.meta.shift == 0.0);
}

TEST_CASE("both solve paths agree on a banded pair", "[eigsolve]") {
  const auto pair = fd2_pair(-12.0, 12.0, 800, &oscillator_V);
  const Spectrum tri = magrobin::solve_tridiagonal(pair, 3);
  const Spectrum sp = magrobin::solve_sparse(pair, 3, 0.0);
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(tri.eigenvalues[i] - sp.eigenvalues[i]) <=
          1e-9 * std::max(1.0, std::abs(tri.eigenvalues[i])));
}

TEST_CASE("dense oracle on a generalized banded pair", "[eigsolve]") {
  const int N = 1200;
  const auto pair = fem_step_pair(N);
  const int k = 4;
  const Spectrum tri = magrobin::solve_tridiagonal(pair, k);

  Eigen::MatrixXd Ad(pair.stiffness), Md(pair.mass);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> dense(Ad, Md);
  REQUIRE(dense.info() == Eigen::Success);

  for (int i = 0; i < k; ++i) {
    const double ref = dense.eigenvalues()[i];
    CHECK(std::abs(tri.eigenvalues[i] - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
  }

  const Spectrum sp = magrobin::solve_sparse(pair, k, dense.eigenvalues()[0] - 1.0);
  for (int i = 0; i < k; ++i) {
    const double ref = dense.eigenvalues()[i];
    CHECK(std::abs(sp.eigenvalues[i] - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
  }

  // mass-orthonormality of returned vectors
  Eigen::MatrixXd G = tri.eigenvectors.transpose() * Md * tri.eigenvectors;
  CHECK((G - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("Galerkin monotonicity under nested refinement", "[eigsolve][property]") {
  const int k = 3;
  std::vector<std::vector<double>> levels;
  for (int N : {40, 80, 160}) {
    const Spectrum s = magrobin::solve_tridiagonal(fem_step_pair(N), k);
    levels.push_back(s.eigenvalues);
  }
  for (std::size_t l = 1; l < levels.size(); ++l)
    for (int i = 0; i < k; ++i)
      CHECK(levels[l][i] <= levels[l - 1][i] + 1e-8 * std::max(1.0, std::abs(levels[l - 1][i])));
}

TEST_CASE("shift invariance", "[eigsolve][property]") {
  const auto pair = fd2_pair(-12.0, 12.0, 500, &oscillator_V);
  const double c = 7.3;
  SymmetricOperatorPair shifted{pair.stiffness + c * pair.mass, pair.mass};
  const Spectrum base = magrobin::solve_tridiagonal(pair, 3);
  const Spectrum moved = magrobin::solve_tridiagonal(shifted, 3);
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(moved.eigenvalues[i] - c - base.eigenvalues[i]) <=
          1e-10 * std::max(1.0, std::abs(base.eigenvalues[i])));

  const Spectrum base_sp = magrobin::solve_sparse(pair, 2, 0.0);
  const Spectrum moved_sp = magrobin::solve_sparse(shifted, 2, c);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(moved_sp.eigenvalues[i] - c - base_sp.eigenvalues[i]) <=
          1e-10 * std::max(1.0, std::abs(base_sp.eigenvalues[i])));
}

TEST_CASE("bit-identical reproducibility", "[eigsolve][property]") {
  const auto pair = fd2_pair(-12.0, 12.0, 500, &oscillator_V);
  const Spectrum a = magrobin::solve_tridiagonal(pair, 3);
  const Spectrum b = magrobin::solve_tridiagonal(pair, 3);
  for (int i = 0; i < 3; ++i) CHECK(a.eigenvalues[i] == b.eigenvalues[i]);
  CHECK((a.eigenvectors - b.eigenvectors).cwiseAbs().maxCoeff() == 0.0);

  const Spectrum c = magrobin::solve_sparse(pair, 2, 0.0);
  const Spectrum d = magrobin::solve_sparse(pair, 2, 0.0);
  for (int i = 0; i < 2; ++i) CHECK(c.eigenvalues[i] == d.eigenvalues[i]);
  CHECK((c.eigenvectors - d.eigenvectors).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vectors can be skipped", "[eigsolve]") {
  SolveOptions opts;
  opts.want_vectors = false;
  const Spectrum s = magrobin::solve_tridiagonal(fd2_pair(0.0, 1.0, 200), 2, opts);
  CHECK(s.eigenvectors.size() == 0);
  REQUIRE(s.eigenvalues.size() == 2);
}

TEST_CASE("input validation errors", "[eigsolve][errors]") {
  const auto good = fd2_pair(0.0, 1.0, 50);

  SECTION("k out of range") {
    CHECK_THROWS_AS(magrobin::solve_tridiagonal(good, 51), magrobin::DimensionError);
    CHECK_THROWS_AS(magrobin::solve_sparse(good, 51, 0.0), magrobin::DimensionError);
  }

  SECTION("mismatched dimensions") {
    SymmetricOperatorPair bad{good.stiffness, sparse_identity(49)};
    CHECK_THROWS_AS(magrobin::solve_tridiagonal(bad, 1), magrobin::DimensionError);
  }

  SECTION("non-positive mass diagonal") {
    Eigen::SparseMatrix<double> M = sparse_identity(50);
    M.coeffRef(7, 7) = -2.0;
    SymmetricOperatorPair bad{good.stiffness, M};
    CHECK_THROWS_AS(magrobin::solve_tridiagonal(bad, 1), magrobin::InvalidMass);
    CHECK_THROWS_AS(magrobin::solve_sparse(bad, 1, 0.0), magrobin::InvalidMass);
  }

  SECTION("indefinite banded mass") {
    Eigen::VectorXd d = Eigen::VectorXd::Ones(4), e(3);
    e << 2.0, 0.0, 0.0;  // 2x2 leading block [[1,2],[2,1]] is indefinite
    SymmetricOperatorPair bad{tridiag_matrix(Eigen::VectorXd::Ones(4) * 2.0,
                                             Eigen::VectorXd::Ones(3) * -1.0),
                              tridiag_matrix(d, e)};
    CHECK_THROWS_AS(magrobin::solve_tridiagonal(bad, 1), magrobin::InvalidMass);
  }

  SECTION("asymmetric stiffness") {
    Eigen::SparseMatrix<double> A = good.stiffness;
    A.coeffRef(0, 1) += 1.0;
    SymmetricOperatorPair bad{A, good.mass};
    CHECK_THROWS_AS(magrobin::solve_tridiagonal(bad, 1), magrobin::DimensionError);
  }

  SECTION("bandwidth above one rejected by the banded path") {
    Eigen::SparseMatrix<double> A = good.stiffness;
    A.coeffRef(0, 2) = 1.0;
    A.coeffRef(2, 0) = 1.0;
    SymmetricOperatorPair bad{A, good.mass};
    CHECK_THROWS_AS(magrobin::solve_tridiagonal(bad, 1), magrobin::DimensionError);
  }
}

TEST_CASE("singular shift is reported", "[eigsolve][errors]") {
  Eigen::VectorXd d(3);
  d << 1.0, 2.0, 3.0;
  SymmetricOperatorPair pair{tridiag_matrix(d, Eigen::VectorXd::Zero(2)), sparse_identity(3)};
  CHECK_THROWS_AS(magrobin::solve_sparse(pair, 1, 2.0), magrobin::ShiftSingular);
}

TEST_CASE("too few eigenvalues above the shift", "[eigsolve][errors]") {
  Eigen::VectorXd d(2);
  d << 1.0, 2.0;
  SymmetricOperatorPair pair{tridiag_matrix(d, Eigen::VectorXd::Zero(1)), sparse_identity(2)};
  CHECK_THROWS_AS(magrobin::solve_sparse(pair, 2, 1.5), magrobin::SolverError);
}
