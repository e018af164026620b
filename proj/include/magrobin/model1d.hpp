#pragma once

// One-dimensional model operators: the weighted Robin transverse form, the
// flat-well model -d^2/ds^2 + (zeta + s^2/2)^2, the Neumann half-line
// oscillator behind the de Gennes constant, and the shifted harmonic family.

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "magrobin/asymfit.hpp"
#include "magrobin/eigsolve.hpp"
#include "magrobin/errors.hpp"

namespace magrobin {

enum class RightCondition { Dirichlet, Free };

struct WeightedForm1D {
  Eigen::VectorXd grid;       // t0=0 < ... < tN=T
  Eigen::VectorXd weight;     // w(ti) > 0
  Eigen::VectorXd potential;  // V(ti)
  double boundary_coeff = 0.0;  // beta, the form carries -beta*|u(0)|^2
  RightCondition right_condition = RightCondition::Dirichlet;
};

struct TransverseMode {
  double mu = 0.0;
  Eigen::VectorXd f;  // samples on the full grid, positive, weighted-norm 1
  double h = 0.0;     // filled by semiclassical callers
  Eigen::VectorXd derivative_estimates;  // optional, filled by sweep drivers
};

struct ModelMinimum {
  double value = 0.0;
  double minimizer = 0.0;
};

struct HarmonicGround {
  double value = 0.0;
  bool degenerate_well = false;
};

namespace detail {

inline Eigen::SparseMatrix<double> band1(const Eigen::VectorXd& diag,
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

inline void check_form(const WeightedForm1D& form) {
  const int nn = static_cast<int>(form.grid.size());
  if (form.weight.size() != nn || form.potential.size() != nn)
    throw DimensionError("grid, weight, potential must have equal lengths");
  if (nn < 17) throw GridError("need at least 16 intervals");
  if (std::abs(form.grid[0]) > 1e-12 * std::max(1.0, std::abs(form.grid[nn - 1])))
    throw GridError("grid must start at 0");
  for (int i = 1; i < nn; ++i)
    if (!(form.grid[i] > form.grid[i - 1])) throw GridError("grid must be strictly increasing");
  for (int i = 0; i < nn; ++i)
    if (!(form.weight[i] > 0))
      throw InvalidWeight("weight non-positive at t=" + std::to_string(form.grid[i]));
}

// P1 Ritz-Galerkin assembly of u -> int w|u'|^2 + int V w |u|^2 - beta|u(0)|^2
// with weighted mass int w|u|^2.  Coefficients are interpolated linearly on
// each element; 3-point Gauss quadrature integrates those products exactly.
inline SymmetricOperatorPair assemble_weighted(const WeightedForm1D& form) {
  static const double gp[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
  static const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  const int nn = static_cast<int>(form.grid.size());
  const int ndof = (form.right_condition == RightCondition::Dirichlet) ? nn - 1 : nn;
  Eigen::VectorXd ad = Eigen::VectorXd::Zero(ndof), ae = Eigen::VectorXd::Zero(ndof - 1);
  Eigen::VectorXd md = Eigen::VectorXd::Zero(ndof), me = Eigen::VectorXd::Zero(ndof - 1);
  for (int el = 0; el + 1 < nn; ++el) {
    const double len = form.grid[el + 1] - form.grid[el];
    const double wa = form.weight[el], wb = form.weight[el + 1];
    const double Va = form.potential[el], Vb = form.potential[el + 1];
    double k = 0, paa = 0, pab = 0, pbb = 0, maa = 0, mab = 0, mbb = 0;
    for (int g = 0; g < 3; ++g) {
      const double xi = gp[g], wq = gw[g] * len;
      const double w = wa * (1 - xi) + wb * xi;
      const double V = Va * (1 - xi) + Vb * xi;
      const double fa = 1 - xi, fb = xi;
      k += wq * w / (len * len);
      paa += wq * V * w * fa * fa;
      pab += wq * V * w * fa * fb;
      pbb += wq * V * w * fb * fb;
      maa += wq * w * fa * fa;
      mab += wq * w * fa * fb;
      mbb += wq * w * fb * fb;
    }
    const int a = el, b = el + 1;
    if (a < ndof) {
      ad[a] += k + paa;
      md[a] += maa;
    }
    if (b < ndof) {
      ad[b] += k + pbb;
      md[b] += mbb;
      ae[a] += -k + pab;
      me[a] += mab;
    }
  }
  ad[0] -= form.boundary_coeff;
  return {band1(ad, ae), band1(md, me)};
}

// FD2 Dirichlet ground value of -c u'' + V(x) u on (x0,x1), n interior nodes
inline double fd2_ground(double x0, double x1, int n, double c,
                         const std::function<double(double)>& V) {
  const double step = (x1 - x0) / (n + 1);
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) {
    const double x = x0 + (i + 1) * step;
    d[i] = 2.0 * c / (step * step) + V(x);
  }
  Eigen::VectorXd e = Eigen::VectorXd::Constant(n - 1, -c / (step * step));
  Eigen::SparseMatrix<double> M(n, n);
  M.setIdentity();
  SolveOptions opts;
  opts.want_vectors = false;
  return solve_tridiagonal({band1(d, e), M}, 1, opts).eigenvalues[0];
}

// scan for a unique interior minimum, then golden-section refine
inline ModelMinimum minimize_scan(const std::function<double(double)>& f, double lo,
                                  double hi, int npts, const char* what) {
  std::vector<double> zs(npts), vs(npts);
  for (int i = 0; i < npts; ++i) {
    zs[i] = lo + (hi - lo) * i / (npts - 1);
    vs[i] = f(zs[i]);
  }
  int imin = 0;
  for (int i = 1; i < npts; ++i)
    if (vs[i] < vs[imin]) imin = i;
  int local_minima = 0;
  for (int i = 1; i + 1 < npts; ++i)
    if (vs[i] < vs[i - 1] && vs[i] < vs[i + 1]) ++local_minima;
  if (imin == 0 || imin == npts - 1 || local_minima != 1) {
    std::ostringstream os;
    os << what << " scan is not unimodal (" << local_minima << " interior minima); scan:";
    for (int i = 0; i < npts; ++i) os << " (" << zs[i] << "," << vs[i] << ")";
    throw MinimizationAmbiguous(os.str());
  }
  double a = zs[imin - 1], b = zs[imin + 1];
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > 1e-8) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    }
  }
  const double zmin = 0.5 * (a + b);
  return {f(zmin), zmin};
}

}  // namespace detail

// Ground mode of the weighted Sturm-Liouville form.
inline TransverseMode transverse_ground(const WeightedForm1D& form) {
  detail::check_form(form);
  const auto pair = detail::assemble_weighted(form);
  SolveOptions opts;
  opts.grid = "nodes=" + std::to_string(form.grid.size());
  const Spectrum s = solve_tridiagonal(pair, 1, opts);
  const int nn = static_cast<int>(form.grid.size());
  const int ndof = static_cast<int>(s.eigenvectors.rows());

  TransverseMode mode;
  mode.mu = s.eigenvalues[0];
  mode.f = Eigen::VectorXd::Zero(nn);
  mode.f.head(ndof) = s.eigenvectors.col(0);
  if (mode.f.head(ndof).sum() < 0) mode.f = -mode.f;
  // far-tail samples sit below the eigensolver noise floor and can carry
  // stray signs; floor them.  A genuine node of an excited state would show
  // up at the scale of the mode itself, far above this threshold.
  const double flip_tol = 1e-6 * mode.f.cwiseAbs().maxCoeff();
  for (int i = 0; i < ndof; ++i)
    if (mode.f[i] <= 0) {
      if (std::abs(mode.f[i]) > flip_tol)
        throw SolverError("ground state changed sign");
      mode.f[i] = 1e-300;
    }
  return mode;
}

// Sweep of the boundary-layer transverse operator over h.  For each h the
// form lives on (0, h^{rho-1/sigma}) with weight 1 - 2 kappa h^{1/sigma} t
// - c_star h^{2/sigma} t^2, Robin coefficient 1, Dirichlet right end; the
// eigenvalue is rescaled by h^{2-2/sigma} and fitted against
// {h^{2-2/sigma}, h^{2-1/sigma}, h^2}.
inline FitReport robin_transverse_expansion(double kappa, double c_star, double sigma,
                                            const std::vector<double>& h_list, double rho) {
  if (!(sigma > 0) || !(sigma < 2)) throw DimensionError("sigma must lie in (0,2)");
  if (!(c_star >= 0)) throw DimensionError("c_star must be non-negative");
  if (!(rho > 0) || !(rho < 0.5)) throw DimensionError("rho must lie in (0,1/2)");
  if (h_list.size() < 4) throw DimensionError("need at least 4 values of h");
  for (std::size_t i = 0; i < h_list.size(); ++i) {
    if (!(h_list[i] > 0)) throw DimensionError("h must be positive");
    if (i > 0 && !(h_list[i] < h_list[i - 1]))
      throw DimensionError("h_list must be strictly decreasing");
  }

  std::vector<std::pair<double, double>> samples;
  for (double h : h_list) {
    const double delta = std::pow(h, rho - 1.0 / sigma);
    const double hs = std::pow(h, 1.0 / sigma);
    const int n_base = std::max(4096, static_cast<int>(800 * delta));
    std::vector<double> mus;
    for (int mult : {1, 2, 4}) {
      const int nn = n_base * mult + 1;
      WeightedForm1D form;
      form.grid = Eigen::VectorXd::LinSpaced(nn, 0.0, delta);
      form.weight.resize(nn);
      for (int i = 0; i < nn; ++i) {
        const double t = form.grid[i];
        form.weight[i] = 1.0 - 2.0 * kappa * hs * t - c_star * hs * hs * t * t;
        if (!(form.weight[i] > 0))
          throw InvalidWeight("weight changes sign inside the layer at h=" +
                              std::to_string(h));
      }
      form.potential = Eigen::VectorXd::Zero(nn);
      form.boundary_coeff = 1.0;
      form.right_condition = RightCondition::Dirichlet;
      mus.push_back(transverse_ground(form).mu);
    }
    const RichardsonResult r = richardson(mus, 2.0);
    samples.push_back({h, std::pow(h, 2.0 - 2.0 / sigma) * r.limit});
  }
  return fit_expansion(samples, {2.0 - 2.0 / sigma, 2.0 - 1.0 / sigma, 2.0});
}

// Ground eigenvalue of -d^2/ds^2 + (zeta + s^2/2)^2 on [-L, L], Dirichlet.
// L is enlarged until the boundary potential clears the eigenvalue by 10.
inline double montgomery_lambda(double zeta, double half_width, int n) {
  if (!(half_width > 0)) throw GridError("half_width must be positive");
  if (n < 64) throw GridError("need at least 64 grid points");
  double L = half_width;
  int nn = n;
  for (int round = 0; round < 12; ++round) {
    const double lam = detail::fd2_ground(-L, L, nn, 1.0, [zeta](double s) {
      const double v = zeta + 0.5 * s * s;
      return v * v;
    });
    const double edge = zeta + 0.5 * L * L;
    if (edge * edge >= lam + 10.0) return lam;
    L *= 1.25;
    nn = static_cast<int>(nn * 1.25);
  }
  throw SolverError("could not enclose the well for zeta=" + std::to_string(zeta));
}

// Minimize montgomery_lambda over zeta.  Values are Richardson-extrapolated
// over three nested grids so the minimum is grid-converged.
inline ModelMinimum montgomery_min(int n = 4000, double half_width = 12.0) {
  auto eval = [&](double zeta) {
    std::vector<double> vals;
    for (int div : {4, 2, 1}) vals.push_back(montgomery_lambda(zeta, half_width, n / div));
    return richardson(vals, 2.0).limit;
  };
  const ModelMinimum m = detail::minimize_scan(eval, -4.0, 1.0, 101, "flat-well model");
  if (!(m.minimizer < 0) || !(m.value > 0))
    throw AssumptionViolated("expected a negative minimizer with positive minimum, got (" +
                             std::to_string(m.minimizer) + ", " + std::to_string(m.value) + ")");
  return m;
}

// Ground eigenvalue of the shifted harmonic family (-ih d/ds - m)^2 +
// (xi + m + eta s)^2, reduced by gauge and translation to -h^2 u'' + (eta s)^2 u
// (independent of m and xi).  eta=0 leaves free motion: bottom 0, flagged.
inline HarmonicGround harmonic_ground(double h, double m, double xi, double eta,
                                      double half_width, int n) {
  (void)m;
  (void)xi;
  if (!(h > 0)) throw DimensionError("h must be positive");
  if (!(half_width > 0)) throw GridError("half_width must be positive");
  if (n < 256) throw GridError("need at least 256 grid points");
  if (eta == 0.0) return {0.0, true};

  double L = half_width;
  int nn = n;
  for (int round = 0; round < 12; ++round) {
    std::vector<double> vals;
    for (int div : {4, 2, 1})
      vals.push_back(detail::fd2_ground(-L, L, nn / div, h * h,
                                        [eta](double s) { return eta * eta * s * s; }));
    const double lam = richardson(vals, 2.0).limit;
    // clearance of 25 h|eta| keeps the Gaussian truncation error near 1e-10
    if (eta * eta * L * L >= lam + 25.0 * h * std::abs(eta)) return {lam, false};
    L *= 1.5;
    nn = static_cast<int>(nn * 1.5);
  }
  throw SolverError("could not enclose the harmonic well");
}

// Minimize over xi the Neumann-left ground value of -d^2/dt^2 + (t-xi)^2 on
// (0, T); the minimum is the de Gennes constant.
inline ModelMinimum degennes_theta0(double T = 24.0, int n = 6000) {
  if (!(T > 4)) throw GridError("domain too short");
  if (n < 256) throw GridError("need at least 256 grid points");
  auto eval = [&](double xi) {
    std::vector<double> vals;
    for (int div : {4, 2, 1}) {
      const int nn = n / div + 1;
      WeightedForm1D form;
      form.grid = Eigen::VectorXd::LinSpaced(nn, 0.0, T);
      form.weight = Eigen::VectorXd::Ones(nn);
      form.potential.resize(nn);
      for (int i = 0; i < nn; ++i) {
        const double t = form.grid[i] - xi;
        form.potential[i] = t * t;
      }
      form.boundary_coeff = 0.0;
      form.right_condition = RightCondition::Dirichlet;
      vals.push_back(transverse_ground(form).mu);
    }
    return richardson(vals, 2.0).limit;
  };
  const ModelMinimum m = detail::minimize_scan(eval, 0.0, 2.0, 51, "half-line oscillator");
  if (!(m.value > 0.5) || !(m.value < 1.0))
    throw AssumptionViolated("half-line oscillator minimum " + std::to_string(m.value) +
                             " outside (1/2, 1)");
  return m;
}

}  // namespace magrobin
