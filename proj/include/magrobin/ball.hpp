#pragma once

// Unit ball with a uniform axial field and a Robin boundary coupling.  The
// azimuthal Fourier decomposition leaves a family of 2D forms on (r, theta)
// indexed by the integer mode m; this header assembles those forms, scans the
// mode index for the ground energy, evaluates the effective angular
// eigenvalue on the sphere, and fits h-sweeps against the expected expansions.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "magrobin/asymfit.hpp"
#include "magrobin/eigsolve.hpp"
#include "magrobin/errors.hpp"
#include "magrobin/model1d.hpp"

namespace magrobin {

// Two scalings of the same spherical-shell form.  Critical: boundary term
// -h * integral, gauge term (b/2) r^2 sin^2(theta) against h*m.  HBounded:
// boundary -h^{3/2}, kinetic prefactor h^2 on the whole form, gauge (b/2) r^2.
enum class BallRegime { Critical, HBounded };

inline const char* regime_name(BallRegime r) {
  return r == BallRegime::Critical ? "critical" : "h_bounded";
}

struct BallProblem {
  double h = 0.02;
  double b = 1.0;
  BallRegime regime = BallRegime::Critical;
  double boundary_exponent = 1.0;  // a in the -h^a boundary mass
  double potential_scale = 0.5;    // field coefficient, b/2 unless overridden
  double inner_radius = 0.68;      // Dirichlet truncation radius
  int n_r = 220;                   // radial nodes (inner_radius..1 inclusive)
  int n_theta = 100;               // cell-centered theta nodes inside (0, pi)
};

// Factory defaults: the truncation depth keeps the Dirichlet wall far outside
// the boundary layer (scale h resp. sqrt(h)) while staying near the h^{2/5}
// schedule for small h; grids resolve the layer with >~10 cells per e-fold.
inline BallProblem critical_ball(double h, double b) {
  BallProblem p;
  p.h = h;
  p.b = b;
  p.regime = BallRegime::Critical;
  p.boundary_exponent = 1.0;
  p.potential_scale = 0.5 * b;
  p.inner_radius = 1.0 - std::min(0.999, std::max(std::pow(h, 0.4), 16.0 * h));
  p.n_r = 220;
  p.n_theta = 100;
  return p;
}

inline BallProblem h_bounded_ball(double h, double b) {
  BallProblem p;
  p.h = h;
  p.b = b;
  p.regime = BallRegime::HBounded;
  p.boundary_exponent = 1.5;
  p.potential_scale = 0.5 * b;
  const double depth = std::min(0.99, 14.0 * std::sqrt(h));
  p.inner_radius = 1.0 - depth;
  p.n_r = std::max(240, static_cast<int>(depth / std::sqrt(h) / 0.04));
  p.n_theta = 128;
  return p;
}

namespace detail {

inline void check_ball(const BallProblem& p) {
  if (!(p.h > 0)) throw DimensionError("h must be positive");
  if (!(p.b >= 0)) throw DimensionError("field strength b must be non-negative");
  if (p.boundary_exponent != 1.0 && p.boundary_exponent != 1.5)
    throw DimensionError("boundary exponent must be 1 or 3/2");
  if (!(p.inner_radius > 0.0) || !(p.inner_radius < 1.0))
    throw GridError("inner radius must lie in (0,1), got " + std::to_string(p.inner_radius));
  if (p.n_r < 8 || p.n_theta < 16)
    throw GridError("grid too small: n_r=" + std::to_string(p.n_r) +
                    " n_theta=" + std::to_string(p.n_theta));
}

// Q1 assembly on [inner_radius,1] x (0,pi) with weight r^2 sin(theta) and
// 2x2 Gauss per cell.  Theta nodes sit at (j+1/2)*pi/n_theta so the 1/sin
// factors never touch the poles; the mode potential then enforces decay on
// its own.  Dirichlet at the inner radius drops the first r-row; the Robin
// term is a -h^a weighted trace mass on the r=1 row.
inline SymmetricOperatorPair ball_mode_pair(const BallProblem& p, int m) {
  check_ball(p);
  const int nr = p.n_r, nt = p.n_theta;
  const double r0 = p.inner_radius;
  const double dr = (1.0 - r0) / (nr - 1);
  const double dth = M_PI / nt;
  const double gq[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  const double h = p.h, c = p.potential_scale;
  const bool crit = (p.regime == BallRegime::Critical);

  const int ndof = (nr - 1) * nt;
  std::vector<Eigen::Triplet<double>> ta, tb;
  ta.reserve(static_cast<std::size_t>(nr) * nt * 16 + nt * 4);
  tb.reserve(static_cast<std::size_t>(nr) * nt * 16);

  for (int i = 0; i + 1 < nr; ++i) {
    for (int j = 0; j + 1 < nt; ++j) {
      double Ke[4][4] = {{0}}, Me[4][4] = {{0}};
      for (int gr = 0; gr < 2; ++gr)
        for (int gt = 0; gt < 2; ++gt) {
          const double r = r0 + (i + gq[gr]) * dr;
          const double th = (j + 0.5 + gq[gt]) * dth;
          const double s = std::sin(th);
          const double wq = 0.25 * dr * dth * r * r * s;
          double pv;
          if (crit) {
            const double x2 = r * r * s * s;
            const double d = h * m - c * x2;
            pv = d * d / x2;
          } else {
            const double d = m / s - c * r * r;
            pv = h * h * d * d / (r * r);
          }
          const double kr = h * h;
          const double kt = h * h / (r * r);
          const double Nr[2] = {1.0 - gq[gr], gq[gr]};
          const double Nt[2] = {1.0 - gq[gt], gq[gt]};
          const double dNr[2] = {-1.0 / dr, 1.0 / dr};
          const double dNt[2] = {-1.0 / dth, 1.0 / dth};
          for (int a = 0; a < 2; ++a)
            for (int bb = 0; bb < 2; ++bb)
              for (int cc = 0; cc < 2; ++cc)
                for (int dd = 0; dd < 2; ++dd) {
                  const double shp = Nr[a] * Nr[cc] * Nt[bb] * Nt[dd];
                  Ke[a * 2 + bb][cc * 2 + dd] +=
                      wq * (kr * dNr[a] * dNr[cc] * Nt[bb] * Nt[dd] +
                            kt * Nr[a] * Nr[cc] * dNt[bb] * dNt[dd] + pv * shp);
                  Me[a * 2 + bb][cc * 2 + dd] += wq * shp;
                }
        }
      for (int la = 0; la < 4; ++la) {
        const int gi = (i + la / 2) * nt + j + (la % 2) - nt;  // Dirichlet shift
        if (gi < 0) continue;
        for (int lc = 0; lc < 4; ++lc) {
          const int gj = (i + lc / 2) * nt + j + (lc % 2) - nt;
          if (gj < 0) continue;
          ta.emplace_back(gi, gj, Ke[la][lc]);
          tb.emplace_back(gi, gj, Me[la][lc]);
        }
      }
    }
  }

  // boundary trace at r=1: 1D sin-weighted P1 mass along theta
  const double hb = -std::pow(h, p.boundary_exponent);
  const int base = (nr - 2) * nt;
  for (int j = 0; j + 1 < nt; ++j)
    for (int g = 0; g < 2; ++g) {
      const double th = (j + 0.5 + gq[g]) * dth;
      const double w = 0.5 * dth * std::sin(th) * hb;
      const double Nt[2] = {1.0 - gq[g], gq[g]};
      for (int a = 0; a < 2; ++a)
        for (int cc = 0; cc < 2; ++cc)
          ta.emplace_back(base + j + a, base + j + cc, w * Nt[a] * Nt[cc]);
    }

  SymmetricOperatorPair pair;
  pair.stiffness.resize(ndof, ndof);
  pair.mass.resize(ndof, ndof);
  pair.stiffness.setFromTriplets(ta.begin(), ta.end());
  pair.mass.setFromTriplets(tb.begin(), tb.end());
  const auto finite = [](const Eigen::SparseMatrix<double>& A) {
    return Eigen::Map<const Eigen::ArrayXd>(A.valuePtr(), A.nonZeros()).isFinite().all();
  };
  if (!finite(pair.stiffness) || !finite(pair.mass))
    throw GridError("non-finite assembly at h=" + std::to_string(p.h) + ", m=" +
                    std::to_string(m));
  return pair;
}

// Strictly below the discrete ground state in either regime: at b=0 the
// radial reduction is exact (-(1+h)^2 resp. -h-2h^{3/2}-h^2), the field term
// only adds a nonnegative potential, and Galerkin keeps discrete values above
// the continuum ones.
inline double ball_shift(const BallProblem& p) {
  if (p.regime == BallRegime::Critical) return -(1.0 + p.h) * (1.0 + p.h) - 0.01;
  return -p.h - 2.0 * std::pow(p.h, 1.5) - 2.0 * p.h * p.h;
}

inline const ModelMinimum& flat_well_min() {
  static const ModelMinimum mm = montgomery_min();
  return mm;
}

}  // namespace detail

inline Spectrum ball_mode_spectrum(const BallProblem& p, int m, int k,
                                   SolveOptions opts = {}) {
  const SymmetricOperatorPair pair = detail::ball_mode_pair(p, m);
  if (opts.grid.empty()) {
    std::ostringstream os;
    os << "r=[" << p.inner_radius << ",1]n=" << p.n_r << " theta_n=" << p.n_theta
       << " m=" << m << " " << regime_name(p.regime);
    opts.grid = os.str();
  }
  return solve_sparse(pair, k, detail::ball_shift(p), opts);
}

// Truncation sensitivity: re-solve with the Dirichlet wall 1.5x deeper at the
// same radial resolution and return the change in the ground value.
inline double truncation_shift(const BallProblem& p, int m) {
  SolveOptions o;
  o.want_vectors = false;
  const double v0 = ball_mode_spectrum(p, m, 1, o).eigenvalues[0];
  const double depth = 1.0 - p.inner_radius;
  BallProblem q = p;
  q.inner_radius = std::max(1e-3, 1.0 - 1.5 * depth);
  q.n_r = 1 + static_cast<int>(std::lround((1.0 - q.inner_radius) / depth * (p.n_r - 1)));
  const double v1 = ball_mode_spectrum(q, m, 1, o).eigenvalues[0];
  return v1 - v0;
}

namespace detail {

struct ModeScan {
  int best = 0;
  double value = 0.0;
  int lo = 0, hi = 0;
};

// Downhill walk from `center` plus margin-controlled expansion: the window
// grows (doubling probe steps) until its boundary modes exceed the interior
// minimum by `margin`, or a certified lower bound says they must.  All
// evaluations are memoized in `memo`; WindowExhausted carries the table.
template <class Solve, class Floor>
inline ModeScan scan_modes(std::map<int, double>& memo, Solve solve, Floor floor_fn,
                           int center, double margin, int cap, const std::string& what) {
  auto ev = [&](int m) {
    auto it = memo.find(m);
    if (it != memo.end()) return it->second;
    const double v = solve(m);
    memo.emplace(m, v);
    return v;
  };
  auto bail = [&](int at) {
    std::ostringstream os;
    os << "window cap m<=" << cap << " reached at m=" << at << " (" << what
       << "); scanned:";
    for (const auto& kv : memo) os << "\n  m=" << kv.first << "  value=" << kv.second;
    throw WindowExhausted(os.str());
  };
  auto argmin = [&]() {
    int best = memo.begin()->first;
    double bv = memo.begin()->second;
    for (const auto& kv : memo)
      if (kv.second < bv) {
        bv = kv.second;
        best = kv.first;
      }
    return best;
  };

  int start = std::max(0, std::min(center, cap));
  while (true) {
    for (int dir : {1, -1}) {
      int m = start;
      ev(m);
      while (true) {
        const int mn = m + dir;
        if (mn < 0) break;
        if (mn > cap) bail(mn);
        if (ev(mn) < ev(m))
          m = mn;
        else
          break;
      }
    }
    const int best = argmin();
    const double bestv = memo.at(best);
    int lo = best, hi = best;
    bool improved = false;
    for (int step = 1;;) {  // upward
      const int mp = hi + step;
      if (floor_fn(mp) > bestv + margin) {
        hi = mp;  // certified without solving
        break;
      }
      if (mp > cap) bail(mp);
      const double v = ev(mp);
      hi = mp;
      if (v < bestv) {
        improved = true;
        break;
      }
      if (v > bestv + margin) break;
      step *= 2;
    }
    if (improved) {
      start = argmin();
      continue;
    }
    for (int step = 1; lo > 0;) {  // downward
      const int mp = std::max(0, lo - step);
      const double v = ev(mp);
      lo = mp;
      if (v < bestv) {
        improved = true;
        break;
      }
      if (v > bestv + margin || mp == 0) break;
      step *= 2;
    }
    if (improved) {
      start = argmin();
      continue;
    }
    ModeScan out;
    out.best = best;
    out.value = bestv;
    out.lo = lo;
    out.hi = hi;
    return out;
  }
}

}  // namespace detail

// Center of the mode window.  Critical regime: the gauge term is minimized
// near h*m = (b/2) r^2 sin^2(theta); expanding around the boundary equator
// with the flat-well minimizer zeta0 as the angular offset gives
// m = b/(2h) - b/2 + zeta0 (b/h)^{1/3}, which matches exhaustive scans.
// HBounded: the angular well sits near m = b/2.
inline int ball_window_center(const BallProblem& p) {
  if (!(p.b > 0)) return 0;
  if (p.regime == BallRegime::HBounded)
    return std::max(0, static_cast<int>(std::llround(0.5 * p.b)));
  const double z0 = detail::flat_well_min().minimizer;
  const double c = p.b / (2.0 * p.h) - 0.5 * p.b + z0 * std::cbrt(p.b / p.h);
  return std::max(0, static_cast<int>(std::llround(c)));
}

struct BallGround {
  double energy = 0.0;
  int m_star = 0;
  int window_lo = 0, window_hi = 0;
  double margin = 0.0;
  std::vector<std::pair<int, double>> scan;  // coarse (m, value) actually solved
  std::string grid;
};

// Minimum over modes.  Negative m are dominated mode-by-mode (the gauge
// offset only grows), so the window stays in m >= 0.  The walk runs on the
// problem's own grids; the best three candidates are re-solved on finer grids
// and Richardson-extrapolated (factor 1.5, second order).
inline BallGround ball_ground(const BallProblem& p) {
  detail::check_ball(p);
  std::map<int, double> memo;
  SolveOptions o;
  o.want_vectors = false;
  auto coarse = [&](int m) { return ball_mode_spectrum(p, m, 1, o).eigenvalues[0]; };

  // discrete comparison floor: on the same grid the mode potential dominates
  // (h m - c)^2 (resp. h^2 (m-c)^2) once the gauge offset clears the well, so
  // ground(m) >= ground(m=0, b=0) + that offset; certifies the upper window.
  BallProblem q0 = p;
  q0.b = 0.0;
  q0.potential_scale = 0.0;
  const double base0 = ball_mode_spectrum(q0, 0, 1, o).eigenvalues[0];
  const double c = p.potential_scale;
  auto floor_fn = [&](int m) {
    if (p.regime == BallRegime::Critical) {
      const double d = p.h * m - c;
      return d >= 0 ? base0 + d * d : -std::numeric_limits<double>::infinity();
    }
    const double d = m - c;
    return d >= 0 ? base0 + p.h * p.h * d * d : -std::numeric_limits<double>::infinity();
  };

  const double margin = 10.0 * p.h;
  const int cap = static_cast<int>(10.0 * p.b / p.h + 100.0);
  const detail::ModeScan scan = detail::scan_modes(memo, coarse, floor_fn,
                                                   ball_window_center(p), margin, cap,
                                                   "ball h=" + std::to_string(p.h) +
                                                       " b=" + std::to_string(p.b));

  std::vector<std::pair<double, int>> order;
  for (const auto& kv : memo) order.emplace_back(kv.second, kv.first);
  std::sort(order.begin(), order.end());
  const int ncand = std::min<int>(3, static_cast<int>(order.size()));

  BallGround out;
  out.window_lo = scan.lo;
  out.window_hi = scan.hi;
  out.margin = margin;
  out.energy = std::numeric_limits<double>::infinity();
  BallProblem q1 = p, q2 = p;
  if (p.regime == BallRegime::Critical) {
    q1.n_r = std::max(480, (3 * p.n_r + 1) / 2);
    q1.n_theta = std::max(200, (3 * p.n_theta + 1) / 2);
    q2.n_r = std::max(720, (9 * p.n_r + 3) / 4);
    q2.n_theta = std::max(300, (9 * p.n_theta + 3) / 4);
  } else {
    q2.n_r = (3 * p.n_r) / 2;
    q2.n_theta = (3 * p.n_theta) / 2;
  }
  for (int i = 0; i < ncand; ++i) {
    const int m = order[i].second;
    const double v1 = (p.regime == BallRegime::Critical)
                          ? ball_mode_spectrum(q1, m, 1, o).eigenvalues[0]
                          : memo.at(m);
    const double v2 = ball_mode_spectrum(q2, m, 1, o).eigenvalues[0];
    const double rich = v2 + (v2 - v1) / (1.5 * 1.5 - 1.0);
    if (rich < out.energy) {
      out.energy = rich;
      out.m_star = m;
    }
  }
  for (const auto& kv : memo) out.scan.emplace_back(kv.first, kv.second);
  std::ostringstream gs;
  gs << "walk r_n=" << p.n_r << " theta_n=" << p.n_theta << " depth="
     << (1.0 - p.inner_radius);
  if (p.regime == BallRegime::Critical)
    gs << "; refine r_n=" << q1.n_r << "x" << q1.n_theta << " and " << q2.n_r << "x"
       << q2.n_theta;
  else
    gs << "; refine r_n=" << q2.n_r << "x" << q2.n_theta << " against the walk grid";
  gs << "; richardson factor 1.5";
  out.grid = gs.str();
  return out;
}

// Ground eigenvalue of the weighted angular form
//   f -> int (|f'|^2 + (m/sin - b/2)^2 |f|^2) sin dtheta
// on a cell-centered grid, 2-point Gauss, natural ends (the potential alone
// controls the poles for m != 0).
inline double lambda_m(int m, double b, int n_theta) {
  if (n_theta < 64) throw DimensionError("n_theta must be at least 64");
  const double dth = M_PI / n_theta;
  const double gq[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  Eigen::VectorXd ad = Eigen::VectorXd::Zero(n_theta), md = Eigen::VectorXd::Zero(n_theta);
  Eigen::VectorXd ae = Eigen::VectorXd::Zero(n_theta - 1), me = Eigen::VectorXd::Zero(n_theta - 1);
  for (int j = 0; j + 1 < n_theta; ++j) {
    for (int g = 0; g < 2; ++g) {
      const double th = (j + 0.5 + gq[g]) * dth;
      const double s = std::sin(th);
      const double d = m / s - 0.5 * b;
      const double wq = 0.5 * dth * s;
      const double N[2] = {1.0 - gq[g], gq[g]};
      const double k = wq / (dth * dth);
      ad[j] += k + wq * d * d * N[0] * N[0];
      ad[j + 1] += k + wq * d * d * N[1] * N[1];
      ae[j] += -k + wq * d * d * N[0] * N[1];
      md[j] += wq * N[0] * N[0];
      md[j + 1] += wq * N[1] * N[1];
      me[j] += wq * N[0] * N[1];
    }
  }
  if (!ad.allFinite() || !ae.allFinite())
    throw GridError("non-finite angular assembly at m=" + std::to_string(m));
  SolveOptions o;
  o.want_vectors = false;
  o.grid = "theta_n=" + std::to_string(n_theta);
  const SymmetricOperatorPair pair{detail::band1(ad, ae), detail::band1(md, me)};
  return solve_tridiagonal(pair, 1, o).eigenvalues[0];
}

struct EffectiveEigenvalue {
  double value = 0.0;
  int m_star = 0;
  int window_lo = 0, window_hi = 0;
};

// e(b) = inf over integer modes of lambda_m(b).  Window centered at b/2 where
// the angular well can vanish; values are Richardson-extrapolated over a
// factor-1.5 grid pair.  Negative modes are dominated by their mirrors.
inline EffectiveEigenvalue e_of_b(double b, int n_theta = 512) {
  if (!(b >= 0)) throw DimensionError("b must be non-negative");
  std::map<int, double> memo;
  auto solve = [&](int m) {
    const double v1 = lambda_m(m, b, n_theta);
    const double v2 = lambda_m(m, b, (3 * n_theta) / 2);
    return v2 + (v2 - v1) / (1.5 * 1.5 - 1.0);
  };
  // for m >= b/2 the potential is bounded below by (m - b/2)^2 pointwise
  auto floor_fn = [&](int m) {
    const double d = m - 0.5 * b;
    return d >= 0 ? d * d : -std::numeric_limits<double>::infinity();
  };
  const int cap = static_cast<int>(b) + 100;
  const int center = std::max(0, static_cast<int>(std::llround(0.5 * b)));
  const detail::ModeScan scan = detail::scan_modes(memo, solve, floor_fn, center, 2.0,
                                                   cap, "e(b) at b=" + std::to_string(b));
  EffectiveEigenvalue out;
  out.value = scan.value;
  out.m_star = scan.best;
  out.window_lo = scan.lo;
  out.window_hi = scan.hi;
  return out;
}

struct ModeCurve {
  int m = 0;
  std::string axis;  // "b" or "h"
  Eigen::VectorXd parameter;
  Eigen::VectorXd values;
};

inline ModeCurve angular_mode_curve(int m, const Eigen::VectorXd& b_values,
                                    int n_theta = 512) {
  ModeCurve c;
  c.m = m;
  c.axis = "b";
  c.parameter = b_values;
  c.values.resize(b_values.size());
  for (int i = 0; i < b_values.size(); ++i) c.values[i] = lambda_m(m, b_values[i], n_theta);
  if (!c.values.allFinite()) throw GridError("non-finite angular mode curve");
  return c;
}

inline ModeCurve ball_mode_curve(BallRegime regime, double b, int m,
                                 const Eigen::VectorXd& h_values) {
  ModeCurve c;
  c.m = m;
  c.axis = "h";
  c.parameter = h_values;
  c.values.resize(h_values.size());
  SolveOptions o;
  o.want_vectors = false;
  for (int i = 0; i < h_values.size(); ++i) {
    const BallProblem p = (regime == BallRegime::Critical) ? critical_ball(h_values[i], b)
                                                           : h_bounded_ball(h_values[i], b);
    c.values[i] = ball_mode_spectrum(p, m, 1, o).eigenvalues[0];
  }
  if (!c.values.allFinite()) throw GridError("non-finite ball mode curve");
  return c;
}

// Ground state of the flat angular well (zeta + s^2/2)^2 on [-12, 12], with
// the minimizing offset zeta0 and minimum value nu0.  Shared by the trial
// bound below and by the fixture writer.
struct FlatWellProfile {
  double zeta0 = 0.0, nu0 = 0.0;
  Eigen::VectorXd s, f, df;  // uniform grid, ground state, centered derivative
};

inline const FlatWellProfile& flat_well_profile() {
  static const FlatWellProfile prof = [] {
    FlatWellProfile out;
    const ModelMinimum mm = detail::flat_well_min();
    out.zeta0 = mm.minimizer;
    out.nu0 = mm.value;
    const int n = 4801;
    const double smax = 12.0;
    WeightedForm1D form;
    form.grid = Eigen::VectorXd::LinSpaced(n, 0.0, 2.0 * smax);
    form.weight = Eigen::VectorXd::Ones(n);
    form.potential.resize(n);
    for (int i = 0; i < n; ++i) {
      const double v = out.zeta0 + 0.5 * (form.grid[i] - smax) * (form.grid[i] - smax);
      form.potential[i] = v * v;
    }
    form.boundary_coeff = 0.0;
    form.right_condition = RightCondition::Dirichlet;
    const TransverseMode tm = transverse_ground(form);
    if (std::abs(tm.mu - mm.value) > 1e-4)
      throw SolverError("flat-well profile disagrees with the minimum: " +
                        std::to_string(tm.mu) + " vs " + std::to_string(mm.value));
    out.s = form.grid.array() - smax;
    out.f = tm.f;
    const double ds = out.s[1] - out.s[0];
    out.df.resize(n);
    for (int i = 1; i + 1 < n; ++i) out.df[i] = (out.f[i + 1] - out.f[i - 1]) / (2.0 * ds);
    out.df[0] = (out.f[1] - out.f[0]) / ds;
    out.df[n - 1] = (out.f[n - 1] - out.f[n - 2]) / ds;
    return out;
  }();
  return prof;
}

struct TrialBound {
  double value = 0.0;
  int m = 0;
  bool small_field = false;  // angular scaling degenerates below b=1e-3
  std::string note;
};

// Upper bound for the critical-regime ground energy from the separable trial
// state u0((1-r)/h) * f((b/h)^{1/3}(theta - pi/2)) * e^{i m phi} with
// u0(t) = sqrt(2) e^{-t}, f the flat-well ground state and m the window
// center.  Any trial state bounds the bottom of the spectrum from above;
// the quotient is evaluated by composite 2-point Gauss quadrature.
inline TrialBound ball_trial_upper_bound(double h, double b) {
  if (!(h > 0)) throw DimensionError("h must be positive");
  if (!(b >= 0)) throw DimensionError("b must be non-negative");
  const FlatWellProfile& prof = flat_well_profile();
  TrialBound out;
  out.small_field = (b < 1e-3);
  if (out.small_field)
    out.note = "angular scale (b/h)^{1/3} degenerate; bound is loose";
  const double z0 = prof.zeta0;
  out.m = (b > 0) ? std::max(0, static_cast<int>(std::llround(
                                    b / (2.0 * h) - 0.5 * b + z0 * std::cbrt(b / h))))
                  : 0;
  const double sfac = std::cbrt(b / h);
  const double c = 0.5 * b;
  const double smax = prof.s[prof.s.size() - 1];
  const double ds = prof.s[1] - prof.s[0];
  auto fval = [&](double s, double& f, double& df) {
    if (std::abs(s) >= smax) {
      f = 0.0;
      df = 0.0;
      return;
    }
    const double x = (s - prof.s[0]) / ds;
    const int i = std::min(static_cast<int>(x), static_cast<int>(prof.s.size()) - 2);
    const double t = x - i;
    f = (1.0 - t) * prof.f[i] + t * prof.f[i + 1];
    df = (1.0 - t) * prof.df[i] + t * prof.df[i + 1];
  };

  const double ra = std::max(0.0, 1.0 - 40.0 * h);  // u0^2 tail below e^{-80}
  const double gq[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  const double sqrt2 = std::sqrt(2.0);

  auto quotient = [&](int nr, int nt) {
    const double drq = (1.0 - ra) / nr, dthq = M_PI / nt;
    std::vector<double> rr(2 * nr), Rv(2 * nr);
    for (int i = 0; i < nr; ++i)
      for (int g = 0; g < 2; ++g) {
        const double r = ra + (i + gq[g]) * drq;
        rr[2 * i + g] = r;
        Rv[2 * i + g] = sqrt2 * std::exp(-(1.0 - r) / h);
      }
    std::vector<double> Fv(2 * nt), dFv(2 * nt), sv(2 * nt);
    for (int j = 0; j < nt; ++j)
      for (int g = 0; g < 2; ++g) {
        const double th = (j + gq[g]) * dthq;
        double f, df;
        fval(sfac * (th - 0.5 * M_PI), f, df);
        sv[2 * j + g] = std::sin(th);
        Fv[2 * j + g] = f;
        dFv[2 * j + g] = df * sfac;  // d/dtheta
      }
    double num = 0.0, den = 0.0, bnd = 0.0;
    const double wq = 0.25 * drq * dthq;
    for (int i = 0; i < 2 * nr; ++i) {
      const double r = rr[i], R = Rv[i];
      const double R2 = R * R;
      for (int j = 0; j < 2 * nt; ++j) {
        const double s = sv[j], F = Fv[j], dF = dFv[j];
        const double x2 = r * r * s * s;
        const double d = h * out.m - c * x2;
        const double pv = d * d / x2;
        const double v2 = R2 * F * F;
        const double wgt = wq * r * r * s;
        den += wgt * v2;
        num += wgt * (v2 +  // h^2 |dv/dr|^2 with u0' = -u0/h
                      h * h / (r * r) * R2 * dF * dF + pv * v2);
      }
    }
    for (int j = 0; j < 2 * nt; ++j) bnd += 0.5 * dthq * sv[j] * 2.0 * Fv[j] * Fv[j];
    num -= h * bnd;
    if (!std::isfinite(num) || !std::isfinite(den) || !(den > 0))
      throw QuadratureError("trial quotient not finite at h=" + std::to_string(h) +
                            " b=" + std::to_string(b));
    return num / den;
  };

  // two-level refinement check; the reported bound is padded by the observed
  // delta so residual quadrature bias cannot pull it under the true quotient
  const double q1 = quotient(800, 1200);
  const double q2 = quotient(1600, 2400);
  const double delta = std::abs(q2 - q1);
  if (delta > std::max(1e-7, 1e-7 * std::abs(q2)))
    throw QuadratureError("trial quadrature did not converge: levels " +
                          std::to_string(q1) + " and " + std::to_string(q2));
  out.value = q2 + delta;
  return out;
}

struct RegimeFit {
  FitReport fit;
  BallRegime regime = BallRegime::Critical;
  double b = 0.0;
  std::vector<double> h_values, energies;
  std::vector<int> m_stars;
  std::vector<std::string> grids;
  std::vector<double> targets;  // reference coefficients for the comparison
  std::string notes;
};

inline BallProblem make_ball(BallRegime regime, double h, double b) {
  return regime == BallRegime::Critical ? critical_ball(h, b) : h_bounded_ball(h, b);
}

// Sweep ball_ground over a decreasing h list and fit the expansion of the
// matching regime: {1, h, h^{4/3}} against (-1, -2, nu0 b^{4/3}) for
// critical, {h, h^{3/2}, h^2} against (-1, +-2, e(b)) for h_bounded.  The
// sign of the h^{3/2} coefficient is reported, not assumed.
inline RegimeFit verify_regime(BallRegime regime, double b,
                               const std::vector<double>& h_list) {
  if (h_list.size() < 4)
    throw DimensionError("need at least 4 h samples for a 3-term fit");
  for (std::size_t i = 0; i < h_list.size(); ++i) {
    if (!(h_list[i] > 0)) throw DimensionError("h values must be positive");
    if (i > 0 && !(h_list[i] < h_list[i - 1]))
      throw DimensionError("h list must be strictly decreasing");
  }
  RegimeFit out;
  out.regime = regime;
  out.b = b;
  std::vector<std::pair<double, double>> samples;
  for (double h : h_list) {
    const BallGround g = ball_ground(make_ball(regime, h, b));
    out.h_values.push_back(h);
    out.energies.push_back(g.energy);
    out.m_stars.push_back(g.m_star);
    out.grids.push_back(g.grid);
    samples.emplace_back(h, g.energy);
  }
  std::ostringstream ns;
  if (regime == BallRegime::Critical) {
    out.fit = fit_expansion(samples, {0.0, 1.0, 4.0 / 3.0});
    const double nu0 = detail::flat_well_min().value;
    out.targets = {-1.0, -2.0, nu0 * std::pow(b, 4.0 / 3.0)};
    ns << "h^{4/3} coefficient " << out.fit.coefficients[2] << " vs nu0 b^{4/3} = "
       << out.targets[2];
  } else {
    out.fit = fit_expansion(samples, {1.0, 1.5, 2.0});
    out.targets = {-1.0, 2.0, e_of_b(b).value};
    const double c32 = out.fit.coefficients[1];
    ns << "h^{3/2} coefficient " << c32 << " (sign "
       << (c32 < 0 ? "negative" : "positive")
       << ", magnitude compared against 2); h^2 target e(b) = " << out.targets[2];
  }
  out.notes = ns.str();
  return out;
}

}  // namespace magrobin
