#pragma once

// Sparse symmetric generalized eigensolvers.
//
// Two code paths:
//   solve_tridiagonal — Sturm-sequence bisection on the pencil (A,M) plus
//                       inverse iteration, for bandwidth <= 1 problems.
//   solve_sparse      — shift-invert Lanczos with full reorthogonalization
//                       in the M inner product, for general sparse pairs.
//
// Both are deterministic: starting vectors come from a fixed LCG, there is
// no internal threading, and identical inputs give bit-identical results.
//
// Residuals are ||Av - lambda Mv|| / ||Mv||.  The enforced tolerance is
// max(requested, roundoff floor of that quotient) and is recorded in
// meta.tolerance, so the invariant residual <= meta.tolerance always holds.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "magrobin/errors.hpp"

namespace magrobin {

struct SymmetricOperatorPair {
  Eigen::SparseMatrix<double> stiffness;
  Eigen::SparseMatrix<double> mass;
};

struct SolveMeta {
  std::string solver;
  int iterations = 0;
  double shift = 0.0;
  std::string grid;
  double tolerance = 0.0;  // residual bound actually enforced
};

struct Spectrum {
  std::vector<double> eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;      // columns, mass-orthonormal; 0x0 if not requested
  std::vector<double> residuals;     // ||Av - lambda Mv|| / ||Mv|| per pair
  SolveMeta meta;
};

struct SolveOptions {
  double residual_tol = 1e-10;
  int max_iterations = 500;
  bool want_vectors = true;
  std::string grid;  // free-form descriptor echoed into meta
};

namespace detail {

// Deterministic start vectors (values in [-0.5, 0.5)).
class Lcg {
 public:
  explicit Lcg(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {}
  double next() {
    state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
    return static_cast<double>(state_ >> 11) * (1.0 / 9007199254740992.0) - 0.5;
  }

 private:
  std::uint64_t state_;
};

inline double inf_norm(const Eigen::SparseMatrix<double>& A) {
  Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(A.rows());
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      rowsum[it.row()] += std::abs(it.value());
  return A.rows() ? rowsum.maxCoeff() : 0.0;
}

// Smallest residual quotient the floating-point evaluation can resolve.
inline double residual_floor(double a_norm, double m_norm, double lam, double x_norm,
                             double mx_norm) {
  const double eps = std::numeric_limits<double>::epsilon();
  return 32.0 * eps * (a_norm + std::abs(lam) * m_norm) * x_norm / std::max(mx_norm, 1e-300);
}

inline void check_pair(const SymmetricOperatorPair& p) {
  const auto& A = p.stiffness;
  const auto& M = p.mass;
  if (A.rows() != A.cols() || M.rows() != M.cols() || A.rows() != M.rows())
    throw DimensionError("operator pair must be square matrices of equal size");
  if (A.rows() == 0) throw DimensionError("empty operator pair");

  // relative asymmetry of the stiffness
  double scale = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  Eigen::SparseMatrix<double> D = A - Eigen::SparseMatrix<double>(A.transpose());
  double asym = 0.0;
  for (int k = 0; k < D.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
      asym = std::max(asym, std::abs(it.value()));
  if (scale == 0.0) scale = 1.0;
  if (asym > 1e-12 * scale)
    throw DimensionError("stiffness asymmetry " + std::to_string(asym / scale) +
                         " exceeds 1e-12 relative");

  for (int i = 0; i < M.rows(); ++i)
    if (M.coeff(i, i) <= 0.0)
      throw InvalidMass("mass diagonal entry " + std::to_string(i) + " is not positive");
}

struct Tridiag {
  Eigen::VectorXd diag;  // n
  Eigen::VectorXd off;   // n-1
  double inf_norm() const {
    const int n = static_cast<int>(diag.size());
    double nrm = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = std::abs(diag[i]);
      if (i > 0) s += std::abs(off[i - 1]);
      if (i + 1 < n) s += std::abs(off[i]);
      nrm = std::max(nrm, s);
    }
    return nrm;
  }
};

inline Tridiag extract_tridiag(const Eigen::SparseMatrix<double>& A, const char* name) {
  const int n = static_cast<int>(A.rows());
  Tridiag t;
  t.diag = Eigen::VectorXd::Zero(n);
  t.off = Eigen::VectorXd::Zero(std::max(n - 1, 0));
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
      const int i = static_cast<int>(it.row()), j = static_cast<int>(it.col());
      if (i == j)
        t.diag[i] = it.value();
      else if (i == j + 1)
        t.off[j] = it.value();
      else if (j == i + 1)
        t.off[i] = it.value();  // symmetric partner, same value
      else if (it.value() != 0.0)
        throw DimensionError(std::string(name) + " has bandwidth > 1");
    }
  return t;
}

// Number of pencil eigenvalues strictly below x, by the inertia of A - x M
// (tridiagonal LDL^T pivot signs, with zero pivots nudged negative).
inline int inertia_below(const Tridiag& a, const Tridiag& m, double x) {
  const int n = static_cast<int>(a.diag.size());
  int count = 0;
  double d_prev = 1.0;
  for (int i = 0; i < n; ++i) {
    double d = a.diag[i] - x * m.diag[i];
    if (i > 0) {
      const double t = a.off[i - 1] - x * m.off[i - 1];
      d -= t * t / d_prev;
    }
    if (d == 0.0 || !std::isfinite(d)) d = -1e-300;
    if (d < 0) ++count;
    d_prev = d;
  }
  return count;
}

// LDL^T of (T - lam*S) with Wilkinson pivot flooring, for inverse iteration.
struct TriFactor {
  Eigen::VectorXd d, l;
  void factor(const Tridiag& a, const Tridiag& m, double lam) {
    const int n = static_cast<int>(a.diag.size());
    d.resize(n);
    l.resize(std::max(n - 1, 0));
    double scale = 0.0;
    for (int i = 0; i < n; ++i)
      scale = std::max(scale, std::abs(a.diag[i]) + std::abs(lam) * std::abs(m.diag[i]));
    for (int i = 0; i + 1 < n; ++i)
      scale = std::max(scale, std::abs(a.off[i]) + std::abs(lam) * std::abs(m.off[i]));
    const double floor_mag = std::max(scale, 1.0) * 1e-18;
    double dp = 1.0;
    for (int i = 0; i < n; ++i) {
      double di = a.diag[i] - lam * m.diag[i];
      if (i > 0) {
        const double e = a.off[i - 1] - lam * m.off[i - 1];
        const double li = e / dp;
        l[i - 1] = li;
        di -= li * e;
      }
      if (std::abs(di) < floor_mag) di = (di < 0 ? -floor_mag : floor_mag);
      d[i] = di;
      dp = di;
    }
  }
  void solve_inplace(Eigen::VectorXd& x) const {
    const int n = static_cast<int>(d.size());
    for (int i = 1; i < n; ++i) x[i] -= l[i - 1] * x[i - 1];
    for (int i = 0; i < n; ++i) x[i] /= d[i];
    for (int i = n - 2; i >= 0; --i) x[i] -= l[i] * x[i + 1];
  }
};

inline Eigen::VectorXd tri_apply(const Tridiag& t, const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    double v = t.diag[i] * x[i];
    if (i > 0) v += t.off[i - 1] * x[i - 1];
    if (i + 1 < n) v += t.off[i] * x[i + 1];
    y[i] = v;
  }
  return y;
}

}  // namespace detail

// k smallest generalized eigenvalues of a bandwidth<=1 pair.
inline Spectrum solve_tridiagonal(const SymmetricOperatorPair& pair, int k,
                                  const SolveOptions& opts = {}) {
  detail::check_pair(pair);
  const int n = static_cast<int>(pair.stiffness.rows());
  if (k < 1 || k > n)
    throw DimensionError("requested " + std::to_string(k) + " eigenvalues of an n=" +
                         std::to_string(n) + " pair");
  const detail::Tridiag A = detail::extract_tridiag(pair.stiffness, "stiffness");
  const detail::Tridiag M = detail::extract_tridiag(pair.mass, "mass");
  const double a_norm = A.inf_norm(), m_norm = M.inf_norm();

  // mass must admit a positive-pivot factorization
  {
    double dp = 1.0;
    for (int i = 0; i < n; ++i) {
      double d = M.diag[i];
      if (i > 0) d -= M.off[i - 1] * M.off[i - 1] / dp;
      if (d <= 0.0)
        throw InvalidMass("mass factorization pivot " + std::to_string(i) + " is not positive");
      dp = d;
    }
  }

  // bracket the lowest k eigenvalues
  double lo = -1.0, hi = 1.0;
  for (int guard = 0;; ++guard) {
    if (guard > 200) throw SolverError("could not bracket spectrum from below");
    if (detail::inertia_below(A, M, lo) == 0) break;
    lo = 2 * lo - 1;
  }
  for (int guard = 0;; ++guard) {
    if (guard > 200) throw SolverError("could not bracket spectrum from above");
    if (detail::inertia_below(A, M, hi) >= k) break;
    hi = 2 * hi + 1;
  }

  std::vector<double> approx(k);
  {
    double left = lo;
    for (int j = 0; j < k; ++j) {
      double xl = left, xr = hi;
      // invariant: inertia(xl) <= j < inertia(xr)
      while (xr - xl > 1e-14 * std::max({1.0, std::abs(xl), std::abs(xr)})) {
        const double xm = 0.5 * (xl + xr);
        if (xm <= xl || xm >= xr) break;
        if (detail::inertia_below(A, M, xm) <= j)
          xl = xm;
        else
          xr = xm;
      }
      approx[j] = 0.5 * (xl + xr);
      left = xl;  // next eigenvalue cannot lie below this
    }
  }

  // inverse iteration per eigenvalue, orthogonalizing inside tie clusters
  Eigen::MatrixXd vecs(n, k);
  std::vector<double> values(k), residuals(k);
  double enforced_tol = opts.residual_tol;
  int iter_total = 0;
  detail::TriFactor fac;
  const double val_scale =
      std::max({std::abs(approx.front()), std::abs(approx.back()), 1.0});
  for (int j = 0; j < k; ++j) {
    fac.factor(A, M, approx[j]);
    detail::Lcg rng(0x5151u + 77u * static_cast<unsigned>(j));
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.next();
    double rho = approx[j];
    double res = std::numeric_limits<double>::infinity();
    double bound = opts.residual_tol;
    bool ok = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
      ++iter_total;
      Eigen::VectorXd rhs = detail::tri_apply(M, x);
      fac.solve_inplace(rhs);
      x = rhs;
      for (int p = j - 1;
           p >= 0 && std::abs(values[p] - approx[j]) <= 1e-10 * val_scale; --p) {
        const double c = vecs.col(p).dot(detail::tri_apply(M, x));
        x -= c * vecs.col(p);
      }
      const double mn = std::sqrt(x.dot(detail::tri_apply(M, x)));
      if (!(mn > 0) || !std::isfinite(mn)) throw SolverError("inverse iteration collapsed");
      x /= mn;
      const Eigen::VectorXd Ax = detail::tri_apply(A, x);
      const Eigen::VectorXd Mx = detail::tri_apply(M, x);
      rho = x.dot(Ax);
      const double mx_norm = Mx.norm();
      res = (Ax - rho * Mx).norm() / std::max(mx_norm, 1e-300);
      bound = std::max(opts.residual_tol,
                       detail::residual_floor(a_norm, m_norm, rho, x.norm(), mx_norm));
      if (res <= bound) {
        ok = true;
        break;
      }
    }
    if (!ok)
      throw SolverError("inverse iteration for eigenvalue " + std::to_string(j) +
                        " stalled at residual " + std::to_string(res) + " after " +
                        std::to_string(opts.max_iterations) + " steps");
    int imax = 0;
    x.cwiseAbs().maxCoeff(&imax);
    if (x[imax] < 0) x = -x;
    vecs.col(j) = x;
    values[j] = rho;
    residuals[j] = res;
    enforced_tol = std::max(enforced_tol, bound);
  }

  // Rayleigh quotients of tie clusters can land a ulp out of order
  std::vector<int> order(k);
  for (int j = 0; j < k; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] < values[b]; });

  Spectrum out;
  out.eigenvalues.resize(k);
  out.residuals.resize(k);
  if (opts.want_vectors) out.eigenvectors.resize(n, k);
  for (int j = 0; j < k; ++j) {
    out.eigenvalues[j] = values[order[j]];
    out.residuals[j] = residuals[order[j]];
    if (opts.want_vectors) out.eigenvectors.col(j) = vecs.col(order[j]);
  }
  out.meta.solver = "sturm_bisection+inverse_iteration";
  out.meta.iterations = iter_total;
  out.meta.shift = 0.0;
  out.meta.grid = opts.grid;
  out.meta.tolerance = enforced_tol;
  return out;
}

// k smallest eigenvalues above `shift`, via shift-invert Lanczos.
inline Spectrum solve_sparse(const SymmetricOperatorPair& pair, int k, double shift,
                             const SolveOptions& opts = {}) {
  detail::check_pair(pair);
  const int n = static_cast<int>(pair.stiffness.rows());
  if (k < 1 || k > n)
    throw DimensionError("requested " + std::to_string(k) + " eigenvalues of an n=" +
                         std::to_string(n) + " pair");
  const auto& A = pair.stiffness;
  const auto& M = pair.mass;
  const double a_norm = detail::inf_norm(A), m_norm = detail::inf_norm(M);

  Eigen::SparseMatrix<double> K = A - shift * M;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.compute(K);
  if (ldlt.info() != Eigen::Success)
    throw ShiftSingular("factorization of (A - shift*M) failed at shift " +
                        std::to_string(shift));
  {
    const Eigen::VectorXd D = ldlt.vectorD();
    const double dmax = D.cwiseAbs().maxCoeff();
    const double dmin = D.cwiseAbs().minCoeff();
    if (!(dmax > 0) || dmin <= dmax * 1e-14)
      throw ShiftSingular("(A - shift*M) numerically singular at shift " +
                          std::to_string(shift) + "; perturb the shift");
  }

  const int max_dim = std::min(n, std::max(opts.max_iterations, 2 * k + 10));
  std::vector<Eigen::VectorXd> V;   // M-orthonormal Lanczos basis
  std::vector<Eigen::VectorXd> MV;  // cached M * basis
  std::vector<double> alpha, beta;

  detail::Lcg rng(0xabcdefu);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.next();
  {
    const Eigen::VectorXd Mv = M * v;
    const double nm = std::sqrt(v.dot(Mv));
    if (!(nm > 0)) throw InvalidMass("mass matrix annihilated the start vector");
    v /= nm;
  }
  V.push_back(v);
  MV.push_back(M * v);

  Spectrum out;
  out.eigenvalues.resize(k);
  out.residuals.resize(k);
  out.eigenvectors.resize(n, k);
  double enforced_tol = opts.residual_tol;

  bool accepted = false;
  int j = 0;
  while (true) {
    Eigen::VectorXd w = ldlt.solve(MV[j]);
    const double a = w.dot(MV[j]);
    alpha.push_back(a);
    w -= a * V[j];
    if (j > 0) w -= beta[j - 1] * V[j - 1];
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t i = 0; i < V.size(); ++i) {
        const double c = w.dot(MV[i]);
        w -= c * V[i];
      }
    double b2 = w.dot(M * w);
    if (b2 < 0) throw InvalidMass("mass matrix produced a negative norm in Lanczos");
    double b = std::sqrt(b2);

    const int m = static_cast<int>(alpha.size());
    const bool breakdown = (b <= 1e-300);
    const bool last_chance = (m == n) || (m >= max_dim);
    const bool periodic = (m >= k + 2) && ((m - k) % 3 == 0);
    if (m >= k && (last_chance || breakdown || periodic)) {
      Eigen::VectorXd dvec = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
      Eigen::VectorXd evec = Eigen::VectorXd::Zero(std::max(m - 1, 0));
      for (int i = 0; i + 1 < m; ++i) evec[i] = beta[i];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      es.computeFromTridiagonal(dvec, evec, Eigen::ComputeEigenvectors);
      const Eigen::VectorXd& theta = es.eigenvalues();  // ascending
      const Eigen::MatrixXd& S = es.eigenvectors();
      std::vector<int> pick;  // largest positive thetas first = ascending lambda
      for (int i = m - 1; i >= 0 && static_cast<int>(pick.size()) < k; --i)
        if (theta[i] > 0) pick.push_back(i);

      if (static_cast<int>(pick.size()) == k) {
        // cheap gate: |dlambda| ~ |b * last Ritz coefficient| / theta^2
        bool values_settled = true;
        for (int idx : pick) {
          const double dlam = std::abs(b * S(m - 1, idx)) / (theta[idx] * theta[idx]);
          const double lam = shift + 1.0 / theta[idx];
          if (dlam > 1e-12 * std::max(1.0, std::abs(lam))) {
            values_settled = false;
            break;
          }
        }
        if (values_settled || breakdown || last_chance) {
          // form Ritz pairs and verify true residuals
          bool all_ok = true;
          double tol_here = opts.residual_tol;
          for (int jj = 0; jj < k && all_ok; ++jj) {
            const int idx = pick[jj];
            Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
            for (int i = 0; i < m; ++i) y += S(i, idx) * V[i];
            Eigen::VectorXd My = M * y;
            const double nm = std::sqrt(y.dot(My));
            if (!(nm > 0)) throw SolverError("Ritz vector collapsed");
            y /= nm;
            My = M * y;
            const Eigen::VectorXd Ay = A * y;
            const double lam = y.dot(Ay);
            const double my_norm = My.norm();
            const double res = (Ay - lam * My).norm() / std::max(my_norm, 1e-300);
            const double bound = std::max(
                opts.residual_tol,
                detail::residual_floor(a_norm, m_norm, lam, y.norm(), my_norm));
            if (res > bound) {
              all_ok = false;
              break;
            }
            tol_here = std::max(tol_here, bound);
            int imax = 0;
            y.cwiseAbs().maxCoeff(&imax);
            if (y[imax] < 0) y = -y;
            out.eigenvalues[jj] = lam;
            out.residuals[jj] = res;
            out.eigenvectors.col(jj) = y;
          }
          if (all_ok) {
            enforced_tol = tol_here;
            accepted = true;
            break;
          }
          if (m == n)
            throw SolverError("residual tolerance unattainable on the full space");
        }
      } else if (m == n) {
        throw SolverError("only " + std::to_string(pick.size()) + " of " +
                          std::to_string(k) + " eigenvalues above the shift exist");
      }
    }
    if (m >= max_dim) break;
    if (breakdown) {
      // invariant subspace found; restart in a fresh direction (coupling 0)
      for (int i = 0; i < n; ++i) w[i] = rng.next();
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t i = 0; i < V.size(); ++i) w -= w.dot(MV[i]) * V[i];
      const double bw = std::sqrt(std::max(w.dot(M * w), 0.0));
      if (bw <= 1e-300) throw SolverError("Lanczos basis exhausted");
      w /= bw;
      beta.push_back(0.0);
    } else {
      w /= b;
      beta.push_back(b);
    }
    V.push_back(w);
    MV.push_back(M * w);
    ++j;
  }
  if (!accepted)
    throw SolverError("shift-invert Lanczos did not converge within " +
                      std::to_string(static_cast<int>(alpha.size())) + " iterations");

  if (!opts.want_vectors) out.eigenvectors.resize(0, 0);
  out.meta.solver = "shift_invert_lanczos";
  out.meta.iterations = static_cast<int>(alpha.size());
  out.meta.shift = shift;
  out.meta.grid = opts.grid;
  out.meta.tolerance = enforced_tol;
  return out;
}

}  // namespace magrobin
