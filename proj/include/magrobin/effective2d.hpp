#pragma once

// Collar charts over a piece of boundary: pullback metric g = G - 2tK + t^2 L,
// normal-gauge magnetic potential, the tangential operator obtained by
// freezing the transverse ground mode at each surface point, its low-lying
// spectrum (complex bilinear FEM, solved through the doubled real-symmetric
// embedding), and the exponential trial-state Rayleigh quotient.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "magrobin/eigsolve.hpp"
#include "magrobin/errors.hpp"
#include "magrobin/geometry.hpp"
#include "magrobin/model1d.hpp"

namespace magrobin {

// Samples of the collar pullback around one boundary point.  Row p =
// i1*n2()+i2 walks the tensor grid (y1[i1], y2[i2]); column k is the scaled
// depth t[k], fields evaluated at physical depth h*t[k].  The full metric is
// block diagonal (normal row/column is the identity), so only the tangential
// 2x2 block is stored; the normal potential component is removed exactly by
// the gauge step in build_chart and is not stored.
struct ChartData {
  Eigen::VectorXd y1, y2;  // chart coordinates; first fundamental form = Id at the center
  Eigen::VectorXd t;       // scaled normal grid on [0, delta/h]
  double h = 0.0;
  double delta = 0.0;
  Eigen::MatrixXd g11, g12, g22;     // tangential metric block
  Eigen::MatrixXd gi11, gi12, gi22;  // pointwise inverse of that block
  Eigen::MatrixXd sqrtg;             // |g|^{1/2}
  Eigen::MatrixXd A1, A2;            // tangential potential in the normal gauge
  Eigen::VectorXd A01, A02;          // its boundary trace
  int n1() const { return static_cast<int>(y1.size()); }
  int n2() const { return static_cast<int>(y2.size()); }
  int nt() const { return static_cast<int>(t.size()); }
  int points() const { return n1() * n2(); }
};

// Surface fields of the frozen-mode reduction.  alpha and gamma are symmetric
// by construction (a12 and c12 hold the shared off-diagonal entry); beta is
// generally not, so all four entries are kept.
struct EffectiveCoefficients {
  Eigen::VectorXd a11, a12, a22;       // kinetic weights
  Eigen::VectorXd b11, b12, b21, b22;  // first-order coupling
  Eigen::VectorXd c11, c12, c22;       // zeroth-order remainder
  Eigen::VectorXd mu;                  // transverse ground energy per surface point
  Eigen::VectorXd rho;                 // mode-derivative correction
  double h = 0.0;
};

struct ChartOptions {
  int n1 = 21, n2 = 21;     // surface grid
  double dt = 0.01;         // transverse step near the wall (scaled units)
  double fine_depth = 8.0;  // uniform resolution up to here
  double stretch = 1.06;    // geometric growth of the tail steps
};

// ---------------------------------------------------------------------------
// chart construction

namespace detail {

// Linear reparametrization around the center so the pulled-back first
// fundamental form is the identity at y' = 0.
struct ChartFrame {
  const ParamSurface* surf = nullptr;
  int chart = 0;
  double u0 = 0.0, v0 = 0.0;
  Eigen::Matrix2d J = Eigen::Matrix2d::Identity();
};

inline ChartFrame make_frame(const ParamSurface& surf, const ChartPoint& center) {
  if (center.chart < 0 || center.chart >= static_cast<int>(surf.charts.size()))
    throw DimensionError("chart index out of range");
  const CurvatureData cd = curvature_at(surf, center);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cd.G);
  if (!(es.eigenvalues()[0] > 0))
    throw DegenerateChart("first fundamental form not positive definite at the chart center");
  ChartFrame fr;
  fr.surf = &surf;
  fr.chart = center.chart;
  fr.u0 = center.y1;
  fr.v0 = center.y2;
  fr.J = es.operatorInverseSqrt();
  // the collar map (y', y3) -> x(y') - y3 n must be orientation-positive, so
  // the tangent pair has to be left-handed with respect to the outward normal
  const ChartJet j = surf.charts[center.chart].jet(center.y1, center.y2);
  if (j.d1.cross(j.d2).dot(cd.n) > 0.0) fr.J.col(1) *= -1.0;
  return fr;
}

// Point data in chart coordinates: position, tangents, outward normal and its
// derivatives, and the three fundamental forms pulled back through the frame.
struct FramePoint {
  Eigen::Vector3d x, e1, e2, n, dn1, dn2;
  Eigen::Matrix2d G, K, L;
};

inline FramePoint frame_point(const ChartFrame& fr, double p1, double p2) {
  const Chart& ch = fr.surf->charts[fr.chart];
  const double u = fr.u0 + fr.J(0, 0) * p1 + fr.J(0, 1) * p2;
  const double v = fr.v0 + fr.J(1, 0) * p1 + fr.J(1, 1) * p2;
  const ChartJet j = ch.jet(u, v);

  Eigen::Matrix2d G;
  G << j.d1.dot(j.d1), j.d1.dot(j.d2), j.d1.dot(j.d2), j.d2.dot(j.d2);
  const double tr = G(0, 0) + G(1, 1);
  const double det = G(0, 0) * G(1, 1) - G(0, 1) * G(1, 0);
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  if (!(0.5 * tr - disc > 1e-12 * std::max(0.5 * tr + disc, 1e-300)))
    throw DegenerateChart("rank-deficient parametrization inside the chart");

  const Eigen::Vector3d N = j.d1.cross(j.d2);
  const double nn = N.norm();
  Eigen::Vector3d n = N / nn;
  const Eigen::Vector3d N1 = j.d11.cross(j.d2) + j.d1.cross(j.d12);
  const Eigen::Vector3d N2 = j.d12.cross(j.d2) + j.d1.cross(j.d22);
  Eigen::Vector3d n1 = (N1 - n * n.dot(N1)) / nn;
  Eigen::Vector3d n2 = (N2 - n * n.dot(N2)) / nn;
  if ((j.x - fr.surf->center).dot(n) < 0.0) {
    n = -n;
    n1 = -n1;
    n2 = -n2;
  }
  Eigen::Matrix2d K;
  K << -j.d11.dot(n), -j.d12.dot(n), -j.d12.dot(n), -j.d22.dot(n);
  Eigen::Matrix2d L;
  L << n1.dot(n1), n1.dot(n2), n1.dot(n2), n2.dot(n2);

  FramePoint fp;
  fp.x = j.x;
  fp.n = n;
  fp.e1 = j.d1 * fr.J(0, 0) + j.d2 * fr.J(1, 0);
  fp.e2 = j.d1 * fr.J(0, 1) + j.d2 * fr.J(1, 1);
  fp.dn1 = n1 * fr.J(0, 0) + n2 * fr.J(1, 0);
  fp.dn2 = n1 * fr.J(0, 1) + n2 * fr.J(1, 1);
  fp.G = fr.J.transpose() * G * fr.J;
  fp.K = fr.J.transpose() * K * fr.J;
  fp.L = fr.J.transpose() * L * fr.J;
  return fp;
}

inline double max_principal_curvature(const FramePoint& fp) {
  const Eigen::Matrix2d W = fp.G.inverse() * fp.K;
  const double tr = W(0, 0) + W(1, 1);
  const double det = W(0, 0) * W(1, 1) - W(0, 1) * W(1, 0);
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  return std::max(std::abs(0.5 * tr + disc), std::abs(0.5 * tr - disc));
}

// Tangential metric block at physical depth: g = G - 2 depth K + depth^2 L.
inline void shell_metric(const FramePoint& fp, double depth, Eigen::Matrix2d& g,
                         Eigen::Matrix2d& gi, double& rootg) {
  g = fp.G - (2.0 * depth) * fp.K + (depth * depth) * fp.L;
  const double det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
  if (!(det > 0.0) || !(g(0, 0) > 0.0))
    throw GridError("collar metric lost positivity at depth " + std::to_string(depth));
  gi << g(1, 1), -g(0, 1), -g(1, 0), g(0, 0);
  gi /= det;
  rootg = std::sqrt(det);
}

inline Eigen::VectorXd collar_t_grid(double T, const ChartOptions& opts) {
  if (!(T > 0.0)) throw GridError("collar depth must be positive");
  std::vector<double> nodes{0.0};
  const double fine = std::min(opts.fine_depth, T);
  const int m = std::max(16, static_cast<int>(std::ceil(fine / opts.dt)));
  for (int i = 1; i <= m; ++i) nodes.push_back(fine * i / m);
  double step = opts.dt;
  while (nodes.back() < T - 1e-12 * T) {
    step *= opts.stretch;
    nodes.push_back(std::min(nodes.back() + step, T));
  }
  // avoid a stub interval at the wall
  const int n = static_cast<int>(nodes.size());
  if (n >= 3 && nodes[n - 1] - nodes[n - 2] < 0.25 * (nodes[n - 2] - nodes[n - 3]))
    nodes.erase(nodes.end() - 2);
  return Eigen::Map<const Eigen::VectorXd>(nodes.data(), nodes.size());
}

inline Eigen::Vector3d curl_fd(const FieldFn& A, const Eigen::Vector3d& x, double eps) {
  Eigen::Matrix3d Jm;  // Jm(i,j) = dA_i/dx_j
  for (int jdir = 0; jdir < 3; ++jdir) {
    Eigen::Vector3d dp = Eigen::Vector3d::Zero();
    dp[jdir] = eps;
    Jm.col(jdir) = (A(x + dp) - A(x - dp)) / (2.0 * eps);
  }
  return {Jm(2, 1) - Jm(1, 2), Jm(0, 2) - Jm(2, 0), Jm(1, 0) - Jm(0, 1)};
}

}  // namespace detail

inline ChartData build_chart(const ParamSurface& surf, const ChartPoint& center,
                             const Eigen::Vector2d& extent, const FieldFn& A, const FieldFn& B,
                             double h, double delta, const ChartOptions& opts = {}) {
  if (!(h > 0.0) || !(delta > 0.0))
    throw DimensionError("build_chart: h and delta must be positive");
  if (!(extent[0] > 0.0) || !(extent[1] > 0.0))
    throw DimensionError("build_chart: chart half-widths must be positive");
  if (opts.n1 < 7 || opts.n2 < 7) throw GridError("chart grid needs at least 7 nodes per side");
  if (!(opts.dt > 0.0) || !(opts.stretch >= 1.0))
    throw GridError("bad transverse grid parameters");

  const detail::ChartFrame fr = detail::make_frame(surf, center);
  const double scale = std::max(1.0, surf.diameter);

  // the supplied potential must actually generate the field
  {
    const double eps = 1e-5 * scale;
    const double ex = extent[0], ey = extent[1];
    const double probes[5][3] = {{0.0, 0.0, 0.0},
                                 {0.6 * ex, -0.4 * ey, 0.0},
                                 {-0.5 * ex, 0.5 * ey, 0.0},
                                 {0.3 * ex, 0.2 * ey, 0.4 * delta},
                                 {-0.2 * ex, -0.6 * ey, 0.25 * delta}};
    for (const auto& pr : probes) {
      const detail::FramePoint fp = detail::frame_point(fr, pr[0], pr[1]);
      const Eigen::Vector3d x = fp.x - pr[2] * fp.n;
      const double err = (detail::curl_fd(A, x, eps) - B(x)).cwiseAbs().maxCoeff();
      if (err > 1e-8)
        throw PotentialInconsistent("curl of the potential misses the field by " +
                                    std::to_string(err) + " at a probe point");
    }
  }

  ChartData c;
  c.h = h;
  c.delta = delta;
  c.y1 = Eigen::VectorXd::LinSpaced(opts.n1, -extent[0], extent[0]);
  c.y2 = Eigen::VectorXd::LinSpaced(opts.n2, -extent[1], extent[1]);
  c.t = detail::collar_t_grid(delta / h, opts);
  const int n1 = opts.n1, n2 = opts.n2, nt = c.nt();
  const int np = n1 * n2;
  for (Eigen::MatrixXd* m :
       {&c.g11, &c.g12, &c.g22, &c.gi11, &c.gi12, &c.gi22, &c.sqrtg, &c.A1, &c.A2})
    m->resize(np, nt);
  c.A01.resize(np);
  c.A02.resize(np);

  const double eg = 1e-5;  // chart-coordinate step for the gauge gradient
  Eigen::Matrix2d g, gi;
  double rootg;
  for (int i1 = 0; i1 < n1; ++i1) {
    for (int i2 = 0; i2 < n2; ++i2) {
      const int p = i1 * n2 + i2;
      const double a = c.y1[i1], b = c.y2[i2];
      const detail::FramePoint fp = detail::frame_point(fr, a, b);
      const double kmax = detail::max_principal_curvature(fp);
      if (delta * kmax >= 0.5)
        throw CollarTooDeep("delta*max|curvature| = " + std::to_string(delta * kmax) +
                            " >= 0.5 at y'=(" + std::to_string(a) + ", " + std::to_string(b) +
                            ")");
      // rays for the normal-gauge gradient d_k phi, phi = int_0^{y3} A3
      const detail::FramePoint sh[4] = {
          detail::frame_point(fr, a - eg, b), detail::frame_point(fr, a + eg, b),
          detail::frame_point(fr, a, b - eg), detail::frame_point(fr, a, b + eg)};
      double phi[4] = {0.0, 0.0, 0.0, 0.0};
      auto a3 = [&A](const detail::FramePoint& q, double s) {
        return -q.n.dot(A(q.x - s * q.n));
      };
      double sprev = 0.0;
      for (int k = 0; k < nt; ++k) {
        const double s = h * c.t[k];
        if (k > 0) {
          const double mid = 0.5 * (sprev + s), half = 0.5 * (s - sprev);
          const double d = half / std::sqrt(3.0);
          for (int r = 0; r < 4; ++r)
            phi[r] += half * (a3(sh[r], mid - d) + a3(sh[r], mid + d));
        }
        detail::shell_metric(fp, s, g, gi, rootg);
        c.g11(p, k) = g(0, 0);
        c.g12(p, k) = g(0, 1);
        c.g22(p, k) = g(1, 1);
        c.gi11(p, k) = gi(0, 0);
        c.gi12(p, k) = gi(0, 1);
        c.gi22(p, k) = gi(1, 1);
        c.sqrtg(p, k) = rootg;
        const Eigen::Vector3d Ax = A(fp.x - s * fp.n);
        c.A1(p, k) = (fp.e1 - s * fp.dn1).dot(Ax) - (phi[1] - phi[0]) / (2.0 * eg);
        c.A2(p, k) = (fp.e2 - s * fp.dn2).dot(Ax) - (phi[3] - phi[2]) / (2.0 * eg);
        sprev = s;
      }
      c.A01[p] = c.A1(p, 0);
      c.A02[p] = c.A2(p, 0);
    }
  }
  for (const Eigen::MatrixXd* m :
       {&c.g11, &c.g12, &c.g22, &c.gi11, &c.gi12, &c.gi22, &c.sqrtg, &c.A1, &c.A2})
    if (!m->array().isFinite().all()) throw GridError("non-finite chart samples");
  return c;
}

inline ChartData build_chart(const ParamSurface& surf, const ChartPoint& center,
                             const Eigen::Vector2d& extent, const FieldFn& A,
                             const Eigen::Vector3d& B, double h, double delta,
                             const ChartOptions& opts = {}) {
  return build_chart(surf, center, extent, A, constant_field(B), h, delta, opts);
}

// B.n at an interior node, recovered from the stored boundary potential by
// fourth-order differences of the tangential curl.  Needs two rings of
// neighbors on each side.
inline double normal_field_from_chart(const ChartData& c, int i1, int i2) {
  const int n1 = c.n1(), n2 = c.n2();
  if (i1 < 2 || i2 < 2 || i1 > n1 - 3 || i2 > n2 - 3)
    throw DimensionError("normal_field_from_chart needs two interior rings");
  auto p = [&](int a, int b) { return a * n2 + b; };
  const double d1 = (c.y1[i1 + 2] - c.y1[i1 - 2]) / 4.0;
  const double d2 = (c.y2[i2 + 2] - c.y2[i2 - 2]) / 4.0;
  const double dA2 = (-c.A02[p(i1 + 2, i2)] + 8.0 * c.A02[p(i1 + 1, i2)] -
                      8.0 * c.A02[p(i1 - 1, i2)] + c.A02[p(i1 - 2, i2)]) /
                     (12.0 * d1);
  const double dA1 = (-c.A01[p(i1, i2 + 2)] + 8.0 * c.A01[p(i1, i2 + 1)] -
                      8.0 * c.A01[p(i1, i2 - 1)] + c.A01[p(i1, i2 - 2)]) /
                     (12.0 * d2);
  return -(dA2 - dA1) / c.sqrtg(p(i1, i2), 0);
}

// Chart carrying only what the tangential solve needs: grids, h, and a
// boundary potential; the collar is collapsed to its trace (flat metric).
inline ChartData synthetic_chart(const Eigen::VectorXd& y1, const Eigen::VectorXd& y2, double h,
                                 const std::function<Eigen::Vector2d(double, double)>& A0) {
  if (!(h > 0.0)) throw DimensionError("synthetic_chart: h must be positive");
  if (y1.size() < 3 || y2.size() < 3) throw GridError("synthetic_chart: need at least 3 nodes");
  for (int i = 1; i < y1.size(); ++i)
    if (!(y1[i] > y1[i - 1])) throw GridError("y1 grid must be strictly increasing");
  for (int i = 1; i < y2.size(); ++i)
    if (!(y2[i] > y2[i - 1])) throw GridError("y2 grid must be strictly increasing");
  ChartData c;
  c.y1 = y1;
  c.y2 = y2;
  c.t = Eigen::VectorXd::Zero(1);
  c.h = h;
  c.delta = 0.0;
  const int np = c.points();
  c.g11 = Eigen::MatrixXd::Ones(np, 1);
  c.g12 = Eigen::MatrixXd::Zero(np, 1);
  c.g22 = Eigen::MatrixXd::Ones(np, 1);
  c.gi11 = c.g11;
  c.gi12 = c.g12;
  c.gi22 = c.g22;
  c.sqrtg = c.g11;
  c.A1.resize(np, 1);
  c.A2.resize(np, 1);
  for (int i1 = 0; i1 < c.n1(); ++i1)
    for (int i2 = 0; i2 < c.n2(); ++i2) {
      const Eigen::Vector2d v = A0(y1[i1], y2[i2]);
      c.A1(i1 * c.n2() + i2, 0) = v[0];
      c.A2(i1 * c.n2() + i2, 0) = v[1];
    }
  c.A01 = c.A1.col(0);
  c.A02 = c.A2.col(0);
  return c;
}

// Coefficients of the decoupled model sum_k P_k^2 + mu(y'): unit kinetic
// weights, no coupling, no remainder.
inline EffectiveCoefficients model_coefficients(const ChartData& chart,
                                                const std::function<double(double, double)>& mu) {
  EffectiveCoefficients co;
  const int np = chart.points();
  co.a11 = Eigen::VectorXd::Ones(np);
  co.a22 = co.a11;
  co.a12 = Eigen::VectorXd::Zero(np);
  co.b11 = co.b12 = co.b21 = co.b22 = co.a12;
  co.c11 = co.c12 = co.c22 = co.a12;
  co.rho = co.a12;
  co.mu.resize(np);
  for (int i1 = 0; i1 < chart.n1(); ++i1)
    for (int i2 = 0; i2 < chart.n2(); ++i2)
      co.mu[i1 * chart.n2() + i2] = mu(chart.y1[i1], chart.y2[i2]);
  co.h = chart.h;
  return co;
}

// ---------------------------------------------------------------------------
// frozen-mode coefficients

namespace detail {

inline void check_chart(const ChartData& c) {
  const int np = c.points(), nt = c.nt();
  if (c.n1() < 3 || c.n2() < 3 || nt < 1) throw DimensionError("chart grids too small");
  for (const Eigen::MatrixXd* m :
       {&c.g11, &c.g12, &c.g22, &c.gi11, &c.gi12, &c.gi22, &c.sqrtg, &c.A1, &c.A2})
    if (m->rows() != np || m->cols() != nt) throw DimensionError("chart field shape mismatch");
  if (c.A01.size() != np || c.A02.size() != np)
    throw DimensionError("chart boundary trace shape mismatch");
  if (!(c.h > 0.0)) throw DimensionError("chart h must be positive");
  if (!(c.sqrtg.minCoeff() > 0.0)) throw GridError("chart weight must stay positive");
  for (int i = 1; i < c.t.size(); ++i)
    if (!(c.t[i] > c.t[i - 1])) throw GridError("chart t grid must be strictly increasing");
}

// second-order difference of a surface field along direction dir (0 -> y1,
// 1 -> y2); one-sided at the edges
template <typename Getter>
inline double surface_diff(const ChartData& c, const Getter& get, int i1, int i2, int dir) {
  const int n = (dir == 0) ? c.n1() : c.n2();
  const Eigen::VectorXd& y = (dir == 0) ? c.y1 : c.y2;
  const int i = (dir == 0) ? i1 : i2;
  auto at = [&](int ii) { return (dir == 0) ? get(ii, i2) : get(i1, ii); };
  if (i > 0 && i < n - 1) return (at(i + 1) - at(i - 1)) / (y[i + 1] - y[i - 1]);
  if (i == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (y[2] - y[0]);
  return (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (y[n - 1] - y[n - 3]);
}

}  // namespace detail

inline EffectiveCoefficients assemble_coefficients(const ChartData& chart) {
  detail::check_chart(chart);
  const int np = chart.points(), nt = chart.nt(), n1 = chart.n1(), n2 = chart.n2();
  if (nt < 17) throw GridError("transverse grid too coarse for the mode solves");

  // trapezoid weights on the (possibly graded) t grid
  Eigen::VectorXd tw = Eigen::VectorXd::Zero(nt);
  for (int k = 0; k + 1 < nt; ++k) {
    const double half = 0.5 * (chart.t[k + 1] - chart.t[k]);
    tw[k] += half;
    tw[k + 1] += half;
  }

  EffectiveCoefficients co;
  co.h = chart.h;
  for (Eigen::VectorXd* v : {&co.a11, &co.a12, &co.a22, &co.b11, &co.b12, &co.b21, &co.b22,
                             &co.c11, &co.c12, &co.c22, &co.mu, &co.rho})
    *v = Eigen::VectorXd::Zero(np);

  Eigen::MatrixXd F(np, nt);  // transverse ground modes, trapezoid-normalized
  WeightedForm1D form;
  form.grid = chart.t;
  form.potential = Eigen::VectorXd::Zero(nt);
  form.right_condition = RightCondition::Dirichlet;
  for (int i1 = 0; i1 < n1; ++i1) {
    for (int i2 = 0; i2 < n2; ++i2) {
      const int p = i1 * n2 + i2;
      form.weight = chart.sqrtg.row(p).transpose();
      form.boundary_coeff = chart.sqrtg(p, 0);
      TransverseMode tm;
      try {
        tm = transverse_ground(form);
      } catch (const Error& e) {
        throw SolverError("transverse solve failed at y'=(" + std::to_string(chart.y1[i1]) +
                          ", " + std::to_string(chart.y2[i2]) + "): " + e.what());
      }
      co.mu[p] = tm.mu;
      const double nrm =
          (tw.array() * tm.f.array().square() * chart.sqrtg.row(p).transpose().array()).sum();
      F.row(p) = tm.f.transpose() / std::sqrt(nrm);
    }
  }

  // alpha/beta/gamma by trapezoid quadrature of the frozen-mode integrals
  for (int p = 0; p < np; ++p) {
    const auto w = (tw.array() * F.row(p).transpose().array().square() *
                    chart.sqrtg.row(p).transpose().array())
                       .eval();
    const auto d1 = (chart.A01[p] - chart.A1.row(p).transpose().array()).eval();
    const auto d2 = (chart.A02[p] - chart.A2.row(p).transpose().array()).eval();
    const auto gi11 = chart.gi11.row(p).transpose().array();
    const auto gi12 = chart.gi12.row(p).transpose().array();
    const auto gi22 = chart.gi22.row(p).transpose().array();
    co.a11[p] = (w * gi11).sum();
    co.a12[p] = (w * gi12).sum();
    co.a22[p] = (w * gi22).sum();
    co.b11[p] = (w * gi11 * d1).sum();
    co.b12[p] = (w * gi12 * d2).sum();
    co.b21[p] = (w * gi12 * d1).sum();
    co.b22[p] = (w * gi22 * d2).sum();
    co.c11[p] = (w * gi11 * d1 * d1).sum();
    co.c12[p] = (w * gi12 * d1 * d2).sum();
    co.c22[p] = (w * gi22 * d2 * d2).sum();
  }

  // rho: mode derivatives by differencing neighboring modes, then the
  // divergence-type outer derivative on the surface grid.  The modes are put
  // in the relative transverse weight |g|^{1/2}/|G|^{1/2} first; the absolute
  // normalization drags an O(1) surface-area gradient through the modes that
  // the mode-coupling term this field represents does not contain.
  Eigen::MatrixXd Fb(np, nt);
  for (int p = 0; p < np; ++p) Fb.row(p) = F.row(p) * std::sqrt(chart.sqrtg(p, 0));
  Eigen::VectorXd J11(np), J12(np), J21(np), J22(np);
  for (int i1 = 0; i1 < n1; ++i1) {
    for (int i2 = 0; i2 < n2; ++i2) {
      const int p = i1 * n2 + i2;
      Eigen::VectorXd df1(nt), df2(nt);
      for (int k = 0; k < nt; ++k) {
        df1[k] = detail::surface_diff(
            chart, [&](int a, int b) { return Fb(a * n2 + b, k); }, i1, i2, 0);
        df2[k] = detail::surface_diff(
            chart, [&](int a, int b) { return Fb(a * n2 + b, k); }, i1, i2, 1);
      }
      const auto wrow = (tw.array() * Fb.row(p).transpose().array() *
                         chart.sqrtg.row(p).transpose().array() / chart.sqrtg(p, 0))
                            .eval();
      J11[p] = (wrow * chart.gi11.row(p).transpose().array() * df1.array()).sum();
      J12[p] = (wrow * chart.gi12.row(p).transpose().array() * df1.array()).sum();
      J21[p] = (wrow * chart.gi12.row(p).transpose().array() * df2.array()).sum();
      J22[p] = (wrow * chart.gi22.row(p).transpose().array() * df2.array()).sum();
    }
  }
  for (int i1 = 0; i1 < n1; ++i1)
    for (int i2 = 0; i2 < n2; ++i2) {
      const int p = i1 * n2 + i2;
      co.rho[p] = detail::surface_diff(
                      chart, [&](int a, int b) { return J11[a * n2 + b]; }, i1, i2, 0) +
                  detail::surface_diff(
                      chart, [&](int a, int b) { return J12[a * n2 + b]; }, i1, i2, 1) +
                  detail::surface_diff(
                      chart, [&](int a, int b) { return J21[a * n2 + b]; }, i1, i2, 0) +
                  detail::surface_diff(
                      chart, [&](int a, int b) { return J22[a * n2 + b]; }, i1, i2, 1);
    }

  for (const Eigen::VectorXd* v : {&co.a11, &co.a12, &co.a22, &co.b11, &co.b12, &co.b21, &co.b22,
                                   &co.c11, &co.c12, &co.c22, &co.mu, &co.rho})
    if (!v->array().isFinite().all()) throw GridError("non-finite effective coefficients");
  return co;
}

// ---------------------------------------------------------------------------
// tangential spectrum

namespace detail {

inline void check_coefficients(const EffectiveCoefficients& co, int np) {
  for (const Eigen::VectorXd* v : {&co.a11, &co.a12, &co.a22, &co.b11, &co.b12, &co.b21, &co.b22,
                                   &co.c11, &co.c12, &co.c22, &co.mu, &co.rho}) {
    if (v->size() != np) throw DimensionError("coefficient field size mismatch");
    if (!v->array().isFinite().all()) throw AssemblyError("non-finite coefficient field");
  }
  for (int p = 0; p < np; ++p)
    if (!(co.a11[p] > 0.0) || !(co.a11[p] * co.a22[p] - co.a12[p] * co.a12[p] > 0.0))
      throw AssemblyError("kinetic weight block must be positive definite");
}

struct EffectivePair {
  Eigen::SparseMatrix<std::complex<double>> H;  // complex Hermitian tangential form
  Eigen::SparseMatrix<double> M;
  double vfloor = 0.0;  // nodal min of the scalar part
  double bpen = 0.0;    // max of bhat' alpha^{-1} bhat (first-order penalty)
};

// Bilinear complex FEM for sum P alpha P + (bhat P + P bhat) + (gamma + mu -
// h^2 rho), P_k = -ih d_k - A0_k, Dirichlet on the chart edge, 2x2 Gauss.
inline EffectivePair assemble_effective(const EffectiveCoefficients& co,
                                        const Eigen::VectorXd& y1, const Eigen::VectorXd& y2,
                                        const Eigen::VectorXd& A01, const Eigen::VectorXd& A02) {
  const int n1 = static_cast<int>(y1.size()), n2 = static_cast<int>(y2.size());
  const int np = n1 * n2;
  if (n1 < 3 || n2 < 3) throw GridError("need at least one interior node per direction");
  check_coefficients(co, np);
  if (A01.size() != np || A02.size() != np)
    throw DimensionError("boundary potential size mismatch");
  const double h = co.h;

  const int m1 = n1 - 2, m2 = n2 - 2, N = m1 * m2;
  auto dof = [&](int i1, int i2) -> int {
    if (i1 < 1 || i1 > n1 - 2 || i2 < 1 || i2 > n2 - 2) return -1;
    return (i1 - 1) * m2 + (i2 - 1);
  };

  Eigen::VectorXd bh1(np), bh2(np), V(np);
  EffectivePair out;
  out.vfloor = std::numeric_limits<double>::infinity();
  out.bpen = 0.0;
  for (int p = 0; p < np; ++p) {
    bh1[p] = co.b11[p] + co.b12[p];
    bh2[p] = co.b21[p] + co.b22[p];
    V[p] = co.c11[p] + 2.0 * co.c12[p] + co.c22[p] + co.mu[p] - h * h * co.rho[p];
    out.vfloor = std::min(out.vfloor, V[p]);
    const double det = co.a11[p] * co.a22[p] - co.a12[p] * co.a12[p];
    const double q = (co.a22[p] * bh1[p] * bh1[p] - 2.0 * co.a12[p] * bh1[p] * bh2[p] +
                      co.a11[p] * bh2[p] * bh2[p]) /
                     det;
    out.bpen = std::max(out.bpen, q);
  }

  using Cplx = std::complex<double>;
  std::vector<Eigen::Triplet<Cplx>> th;
  std::vector<Eigen::Triplet<double>> tm;
  th.reserve(static_cast<std::size_t>(n1 - 1) * (n2 - 1) * 16);
  tm.reserve(th.capacity());
  const double gq[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  for (int e1 = 0; e1 + 1 < n1; ++e1) {
    for (int e2 = 0; e2 + 1 < n2; ++e2) {
      const double dx = y1[e1 + 1] - y1[e1], dy = y2[e2 + 1] - y2[e2];
      const int nodes[4] = {e1 * n2 + e2, (e1 + 1) * n2 + e2, e1 * n2 + e2 + 1,
                            (e1 + 1) * n2 + e2 + 1};
      const int dofs[4] = {dof(e1, e2), dof(e1 + 1, e2), dof(e1, e2 + 1), dof(e1 + 1, e2 + 1)};
      Cplx He[4][4] = {};
      double Me[4][4] = {};
      for (int gx = 0; gx < 2; ++gx) {
        for (int gy = 0; gy < 2; ++gy) {
          const double xi = gq[gx], eta = gq[gy];
          const double Nf[4] = {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta};
          const double dNx[4] = {-(1 - eta) / dx, (1 - eta) / dx, -eta / dx, eta / dx};
          const double dNy[4] = {-(1 - xi) / dy, -xi / dy, (1 - xi) / dy, xi / dy};
          double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0, vv = 0, p1v = 0, p2v = 0;
          for (int a = 0; a < 4; ++a) {
            a11 += Nf[a] * co.a11[nodes[a]];
            a12 += Nf[a] * co.a12[nodes[a]];
            a22 += Nf[a] * co.a22[nodes[a]];
            b1 += Nf[a] * bh1[nodes[a]];
            b2 += Nf[a] * bh2[nodes[a]];
            vv += Nf[a] * V[nodes[a]];
            p1v += Nf[a] * A01[nodes[a]];
            p2v += Nf[a] * A02[nodes[a]];
          }
          const double wq = 0.25 * dx * dy;
          Cplx p1[4], p2[4];
          for (int a = 0; a < 4; ++a) {
            p1[a] = Cplx(-p1v * Nf[a], -h * dNx[a]);
            p2[a] = Cplx(-p2v * Nf[a], -h * dNy[a]);
          }
          for (int b = 0; b < 4; ++b) {
            for (int a = 0; a < 4; ++a) {
              Cplx acc = a11 * p1[a] * std::conj(p1[b]) + a22 * p2[a] * std::conj(p2[b]) +
                         a12 * (p1[a] * std::conj(p2[b]) + p2[a] * std::conj(p1[b]));
              acc += b1 * (p1[a] * Nf[b] + Nf[a] * std::conj(p1[b])) +
                     b2 * (p2[a] * Nf[b] + Nf[a] * std::conj(p2[b]));
              acc += vv * Nf[a] * Nf[b];
              He[b][a] += wq * acc;
              Me[b][a] += wq * Nf[a] * Nf[b];
            }
          }
        }
      }
      for (int b = 0; b < 4; ++b) {
        if (dofs[b] < 0) continue;
        for (int a = 0; a < 4; ++a) {
          if (dofs[a] < 0) continue;
          th.emplace_back(dofs[b], dofs[a], He[b][a]);
          tm.emplace_back(dofs[b], dofs[a], Me[b][a]);
        }
      }
    }
  }
  out.H.resize(N, N);
  out.H.setFromTriplets(th.begin(), th.end());
  out.M.resize(N, N);
  out.M.setFromTriplets(tm.begin(), tm.end());

  Eigen::SparseMatrix<Cplx> Ha = out.H.adjoint();
  Eigen::SparseMatrix<Cplx> D = out.H - Ha;
  const double hnorm = out.H.norm();
  if (!(hnorm > 0.0) || !std::isfinite(hnorm)) throw AssemblyError("degenerate tangential form");
  if (D.norm() > 1e-12 * hnorm)
    throw AssemblyError("assembled form asymmetry above tolerance");
  out.H = 0.5 * (out.H + Ha);
  const Eigen::VectorXd mdiag = out.M.diagonal();
  if (!(mdiag.minCoeff() > 0.0) || !mdiag.array().isFinite().all())
    throw AssemblyError("mass matrix is not positive definite");
  return out;
}

inline EffectivePair assemble_effective(const EffectiveCoefficients& co, const ChartData& chart) {
  check_chart(chart);
  if (std::abs(co.h - chart.h) > 1e-12 * std::max(1.0, chart.h))
    throw DimensionError("coefficient h differs from chart h");
  return assemble_effective(co, chart.y1, chart.y2, chart.A01, chart.A02);
}

// Doubled real-symmetric embedding of the complex pair: z = x + iy maps to
// (x, y), multiplication by i to J(x, y) = (-y, x).
inline SymmetricOperatorPair double_pair(const EffectivePair& ep) {
  const int N = static_cast<int>(ep.H.rows());
  std::vector<Eigen::Triplet<double>> th, tm;
  th.reserve(4 * ep.H.nonZeros());
  tm.reserve(2 * ep.M.nonZeros());
  for (int kcol = 0; kcol < ep.H.outerSize(); ++kcol)
    for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(ep.H, kcol); it; ++it) {
      const double re = it.value().real(), im = it.value().imag();
      if (re != 0.0) {
        th.emplace_back(it.row(), it.col(), re);
        th.emplace_back(it.row() + N, it.col() + N, re);
      }
      if (im != 0.0) {
        th.emplace_back(it.row() + N, it.col(), im);
        th.emplace_back(it.row(), it.col() + N, -im);
      }
    }
  for (int kcol = 0; kcol < ep.M.outerSize(); ++kcol)
    for (Eigen::SparseMatrix<double>::InnerIterator it(ep.M, kcol); it; ++it) {
      tm.emplace_back(it.row(), it.col(), it.value());
      tm.emplace_back(it.row() + N, it.col() + N, it.value());
    }
  SymmetricOperatorPair pair;
  pair.stiffness.resize(2 * N, 2 * N);
  pair.stiffness.setFromTriplets(th.begin(), th.end());
  pair.mass.resize(2 * N, 2 * N);
  pair.mass.setFromTriplets(tm.begin(), tm.end());
  return pair;
}

inline double jdot(const Eigen::VectorXd& w, const Eigen::VectorXd& mv) {
  const int N = static_cast<int>(w.size()) / 2;
  return w.tail(N).dot(mv.head(N)) - w.head(N).dot(mv.tail(N));
}

// Shift-invert Lanczos on the doubled pair with the Krylov space kept closed
// under the complex structure: projections are complex-linear (they remove
// the J-partner component as well), so each eigenvalue of the underlying
// Hermitian operator shows up exactly once instead of twice.
inline Spectrum solve_doubled(const SymmetricOperatorPair& pair, int k, double shift,
                              const SolveOptions& opts = {}) {
  const int n = static_cast<int>(pair.stiffness.rows());
  const int N = n / 2;
  if (2 * N != n) throw DimensionError("doubled pair must have even size");
  if (k < 1 || k > N)
    throw DimensionError("requested " + std::to_string(k) + " eigenvalues of a doubled n=" +
                         std::to_string(N) + " pair");
  const auto& A = pair.stiffness;
  const auto& M = pair.mass;
  const double a_norm = inf_norm(A), m_norm = inf_norm(M);

  Eigen::SparseMatrix<double> K = A - shift * M;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.compute(K);
  if (ldlt.info() != Eigen::Success)
    throw ShiftSingular("factorization of (A - shift*M) failed at shift " +
                        std::to_string(shift));
  {
    const Eigen::VectorXd D = ldlt.vectorD();
    const double dmax = D.cwiseAbs().maxCoeff();
    if (!(dmax > 0) || D.cwiseAbs().minCoeff() <= dmax * 1e-14)
      throw ShiftSingular("(A - shift*M) numerically singular at shift " +
                          std::to_string(shift) + "; perturb the shift");
  }

  auto applyj = [N](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(2 * N);
    out.head(N) = -v.tail(N);
    out.tail(N) = v.head(N);
    return out;
  };

  const int max_dim = std::min(N, std::max(opts.max_iterations, 2 * k + 10));
  std::vector<Eigen::VectorXd> V, MV;
  std::vector<double> alpha, beta;

  Lcg rng(0x5eed5u);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.next();
  {
    const double nm = std::sqrt(v.dot(M * v));
    if (!(nm > 0)) throw InvalidMass("mass matrix annihilated the start vector");
    v /= nm;
  }
  V.push_back(v);
  MV.push_back(M * v);

  Spectrum out;
  out.eigenvalues.resize(k);
  out.residuals.resize(k);
  out.eigenvectors.resize(n, k);

  bool accepted = false;
  int j = 0;
  while (true) {
    Eigen::VectorXd w = ldlt.solve(MV[j]);
    const double a = w.dot(MV[j]);
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t i = 0; i < V.size(); ++i) {
        const double cr = w.dot(MV[i]);
        const double ci = jdot(w, MV[i]);
        w.head(N) -= cr * V[i].head(N) - ci * V[i].tail(N);
        w.tail(N) -= cr * V[i].tail(N) + ci * V[i].head(N);
      }
    double b2 = w.dot(M * w);
    if (b2 < 0) throw InvalidMass("mass matrix produced a negative norm in Lanczos");
    double b = std::sqrt(b2);

    const int m = static_cast<int>(alpha.size());
    const bool breakdown = (b <= 1e-300);
    const bool last_chance = (m == N) || (m >= max_dim);
    const bool periodic = (m >= k + 2) && ((m - k) % 3 == 0);
    if (m >= k && (last_chance || breakdown || periodic)) {
      Eigen::VectorXd dvec = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
      Eigen::VectorXd evec = Eigen::VectorXd::Zero(std::max(m - 1, 0));
      for (int i = 0; i + 1 < m; ++i) evec[i] = beta[i];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      es.computeFromTridiagonal(dvec, evec, Eigen::ComputeEigenvectors);
      const Eigen::VectorXd& theta = es.eigenvalues();
      const Eigen::MatrixXd& S = es.eigenvectors();
      std::vector<int> pick;
      for (int i = m - 1; i >= 0 && static_cast<int>(pick.size()) < k; --i)
        if (theta[i] > 0) pick.push_back(i);

      if (static_cast<int>(pick.size()) == k) {
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
          bool all_ok = true;
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
                opts.residual_tol, residual_floor(a_norm, m_norm, lam, y.norm(), my_norm));
            if (res > bound) {
              all_ok = false;
              break;
            }
            int imax = 0;
            y.cwiseAbs().maxCoeff(&imax);
            if (y[imax] < 0) y = -y;
            out.eigenvalues[jj] = lam;
            out.residuals[jj] = res;
            out.eigenvectors.col(jj) = y;
          }
          if (all_ok) {
            accepted = true;
            break;
          }
          if (m == N)
            throw SolverError("residual tolerance unattainable on the full space");
        }
      } else if (m == N) {
        throw SolverError("only " + std::to_string(pick.size()) + " of " + std::to_string(k) +
                          " eigenvalues above the shift exist");
      }
    }
    if (m >= max_dim) break;
    if (breakdown) {
      for (int i = 0; i < n; ++i) w[i] = rng.next();
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t i = 0; i < V.size(); ++i) {
          const double cr = w.dot(MV[i]);
          const double ci = jdot(w, MV[i]);
          w.head(N) -= cr * V[i].head(N) - ci * V[i].tail(N);
          w.tail(N) -= cr * V[i].tail(N) + ci * V[i].head(N);
        }
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
    throw SolverError("doubled shift-invert Lanczos did not converge within " +
                      std::to_string(static_cast<int>(alpha.size())) + " iterations");
  if (!opts.want_vectors) out.eigenvectors.resize(0, 0);
  out.meta.solver = "doubled_hermitian_lanczos";
  out.meta.iterations = static_cast<int>(alpha.size());
  out.meta.shift = shift;
  out.meta.grid = opts.grid;
  out.meta.tolerance = opts.residual_tol;
  return out;
}

inline bool uniform_grid(const Eigen::VectorXd& y) {
  const int n = static_cast<int>(y.size());
  const double d0 = (y[n - 1] - y[0]) / (n - 1);
  for (int i = 1; i < n; ++i)
    if (std::abs(y[i] - y[i - 1] - d0) > 1e-9 * std::abs(d0)) return false;
  return true;
}

// every stride-th node of a nodal surface field
inline Eigen::VectorXd subsample_field(const Eigen::VectorXd& f, int n1, int n2, int s) {
  const int c1 = (n1 - 1) / s + 1, c2 = (n2 - 1) / s + 1;
  Eigen::VectorXd out(c1 * c2);
  for (int i1 = 0; i1 < c1; ++i1)
    for (int i2 = 0; i2 < c2; ++i2) out[i1 * c2 + i2] = f[(i1 * s) * n2 + i2 * s];
  return out;
}

inline Eigen::VectorXd subsample_axis(const Eigen::VectorXd& y, int s) {
  const int c = (static_cast<int>(y.size()) - 1) / s + 1;
  Eigen::VectorXd out(c);
  for (int i = 0; i < c; ++i) out[i] = y[i * s];
  return out;
}

inline EffectiveCoefficients subsample_coefficients(const EffectiveCoefficients& co, int n1,
                                                    int n2, int s) {
  EffectiveCoefficients c;
  c.h = co.h;
  c.a11 = subsample_field(co.a11, n1, n2, s);
  c.a12 = subsample_field(co.a12, n1, n2, s);
  c.a22 = subsample_field(co.a22, n1, n2, s);
  c.b11 = subsample_field(co.b11, n1, n2, s);
  c.b12 = subsample_field(co.b12, n1, n2, s);
  c.b21 = subsample_field(co.b21, n1, n2, s);
  c.b22 = subsample_field(co.b22, n1, n2, s);
  c.c11 = subsample_field(co.c11, n1, n2, s);
  c.c12 = subsample_field(co.c12, n1, n2, s);
  c.c22 = subsample_field(co.c22, n1, n2, s);
  c.mu = subsample_field(co.mu, n1, n2, s);
  c.rho = subsample_field(co.rho, n1, n2, s);
  return c;
}

}  // namespace detail

// Low-lying spectrum of the tangential operator on the chart rectangle with
// Dirichlet edges.  The continuous spectrum bottom is densely clustered
// relative to any a-priori floor, so on uniform power-of-two-compatible grids
// a ladder of nested subsampled solves walks the shift up next to the target
// before the full solve; the floor shift is kept as fallback and the final
// answer is cross-checked against the coarse level.
inline Spectrum effective_spectrum(const EffectiveCoefficients& co, const ChartData& chart,
                                   int k, const SolveOptions& opts = {}) {
  if (k < 1) throw DimensionError("effective_spectrum: need k >= 1");
  detail::check_chart(chart);
  if (std::abs(co.h - chart.h) > 1e-12 * std::max(1.0, chart.h))
    throw DimensionError("coefficient h differs from chart h");
  const int n1 = chart.n1(), n2 = chart.n2();

  const detail::EffectivePair full =
      detail::assemble_effective(co, chart.y1, chart.y2, chart.A01, chart.A02);
  const double scale = 1.0 + std::abs(full.vfloor) + full.bpen;
  const double crude = full.vfloor - full.bpen - 1e-3 * scale;

  SolveOptions inner = opts;
  inner.want_vectors = false;
  inner.grid.clear();

  double shift = crude;
  double guard = std::numeric_limits<double>::infinity();  // coarse value the answer must not exceed
  std::string path = "floor";
  const bool ladder_ok = (n1 - 1) % 8 == 0 && (n2 - 1) % 8 == 0 && (n1 - 1) / 8 + 1 >= 9 &&
                         detail::uniform_grid(chart.y1) && detail::uniform_grid(chart.y2);
  if (ladder_ok) {
    try {
      double lam_prev = 0.0;
      bool have_prev = false;
      double sh = crude;
      for (int s : {8, 4, 2}) {
        const detail::EffectivePair ep = detail::assemble_effective(
            detail::subsample_coefficients(co, n1, n2, s), detail::subsample_axis(chart.y1, s),
            detail::subsample_axis(chart.y2, s), detail::subsample_field(chart.A01, n1, n2, s),
            detail::subsample_field(chart.A02, n1, n2, s));
        const Spectrum sp = detail::solve_doubled(detail::double_pair(ep), k, sh, inner);
        const double lam = sp.eigenvalues[0];
        if (have_prev) {
          const double drop = std::max(lam_prev - lam, 0.0);
          sh = lam - std::max(drop, 1e-7 * (1.0 + std::abs(lam)));
        }
        guard = lam;
        lam_prev = lam;
        have_prev = true;
      }
      shift = sh;
      path = "ladder";
    } catch (const Error&) {
      shift = crude;
      guard = std::numeric_limits<double>::infinity();
      path = "floor";
    }
  }

  SolveOptions fin = opts;
  if (fin.grid.empty()) {
    std::ostringstream os;
    os << "chart " << n1 << "x" << n2 << " doubled dof=" << 2 * full.H.rows()
       << " shift=" << path;
    fin.grid = os.str();
  }
  Spectrum sp;
  try {
    sp = detail::solve_doubled(detail::double_pair(full), k, shift, fin);
  } catch (const Error&) {
    if (path == "floor") throw;
    sp = detail::solve_doubled(detail::double_pair(full), k, crude, fin);
  }
  if (sp.eigenvalues[0] > guard + 1e-8 * (1.0 + std::abs(guard))) {
    // the refined shift may have cut off the true bottom; redo from the floor
    sp = detail::solve_doubled(detail::double_pair(full), k, crude, fin);
  }
  return sp;
}

// ---------------------------------------------------------------------------
// trial-state Rayleigh quotient

namespace detail {

// smooth plateau cutoff: 1 on [-1/2,1/2], 0 outside (-1,1)
inline double bump_side(double x) { return (x > 0.0) ? std::exp(-1.0 / x) : 0.0; }

inline void cutoff(double s, double& chi, double& dchi) {
  const double a = std::abs(s);
  if (a <= 0.5) {
    chi = 1.0;
    dchi = 0.0;
    return;
  }
  if (a >= 1.0) {
    chi = 0.0;
    dchi = 0.0;
    return;
  }
  const double x = 2.0 * (1.0 - a);
  const double p = bump_side(x), q = bump_side(1.0 - x);
  const double pp = p / (x * x);
  const double qp = (1.0 - x > 0.0) ? q / ((1.0 - x) * (1.0 - x)) : 0.0;
  chi = p / (p + q);
  const double dS = (pp * q + p * qp) / ((p + q) * (p + q));
  dchi = -2.0 * dS * ((s > 0.0) ? 1.0 : -1.0);
}

// composite Gauss nodes: fine panels near 0, geometric growth outward
inline void graded_panels(double span, double fine_panel, double grow, double fine_span,
                          std::vector<double>& edges) {
  edges.clear();
  edges.push_back(0.0);
  const double f = std::min(fine_span, span);
  const int m = std::max(1, static_cast<int>(std::ceil(f / fine_panel)));
  for (int i = 1; i <= m; ++i) edges.push_back(f * i / m);
  double step = fine_panel;
  while (edges.back() < span - 1e-12 * span) {
    step *= grow;
    edges.push_back(std::min(edges.back() + step, span));
  }
}

}  // namespace detail

// Rayleigh quotient of the exponential boundary-layer trial state at one
// boundary point: transverse decay matched to the Robin scale, a Gaussian
// along y1 sized by the normal field component, and the quadratic phase that
// removes the linearized tangential potential.  The returned value is padded
// by the disagreement of two quadrature levels, keeping it on the safe side
// of an upper bound.
inline double variational_upper_bound(const ParamSurface& surf, const Eigen::Vector3d& B,
                                      const ChartPoint& x0, double h, double sigma,
                                      double rho_exp) {
  if (!(h > 0.0)) throw DimensionError("variational_upper_bound: h must be positive");
  if (!(sigma > 0.0)) throw DimensionError("variational_upper_bound: sigma must be positive");
  if (!(rho_exp > 0.0) || !(rho_exp < 0.5))
    throw DimensionError("variational_upper_bound: rho_exp must lie in (0, 1/2)");

  const detail::ChartFrame fr = detail::make_frame(surf, x0);
  const Eigen::Vector3d xc = detail::frame_point(fr, 0.0, 0.0).x;
  const FieldFn A = [&B, xc](const Eigen::Vector3d& x) -> Eigen::Vector3d {
    return 0.5 * B.cross(x - xc);
  };

  const double hr = std::pow(h, rho_exp);  // tangential support half-width
  // the collar must stay short of the focal scale over the support
  {
    double kmax = 0.0;
    for (int i = -2; i <= 2; ++i)
      for (int j = -2; j <= 2; ++j)
        kmax = std::max(kmax, detail::max_principal_curvature(
                                  detail::frame_point(fr, 0.5 * hr * i, 0.5 * hr * j)));
    if (hr * kmax >= 0.5)
      throw CollarTooDeep("trial support depth " + std::to_string(hr) +
                          " reaches the focal scale (max curvature " + std::to_string(kmax) +
                          ")");
  }

  // boundary potential data at the center: values and first derivatives give
  // the quadratic gauge phase and the normal field component
  const double eps = 1e-5;
  double A10, A20, a11, a12, a21, a22;
  {
    auto a0 = [&](double p1, double p2, int kcomp) {
      const detail::FramePoint q = detail::frame_point(fr, p1, p2);
      const Eigen::Vector3d Ax = A(q.x);
      return (kcomp == 1) ? q.e1.dot(Ax) : q.e2.dot(Ax);
    };
    A10 = a0(0.0, 0.0, 1);
    A20 = a0(0.0, 0.0, 2);
    a11 = (a0(eps, 0.0, 1) - a0(-eps, 0.0, 1)) / (2.0 * eps);
    a12 = (a0(0.0, eps, 1) - a0(0.0, -eps, 1)) / (2.0 * eps);
    a21 = (a0(eps, 0.0, 2) - a0(-eps, 0.0, 2)) / (2.0 * eps);
    a22 = (a0(0.0, eps, 2) - a0(0.0, -eps, 2)) / (2.0 * eps);
  }
  const double b3 = a21 - a12;  // tangential curl at the center
  const bool flat_band = std::abs(b3) < 1e-9 * (1.0 + B.norm());

  const double alpha_exp = 2.0 - 1.0 / sigma;
  const double hs = std::pow(h, 1.0 / sigma);             // transverse length scale
  const double tau_max = std::min(hr / hs, 60.0);         // cutoff kills the rest

  auto quotient = [&](int ylevel, double tau_panel) -> double {
    std::vector<double> yedges, tedges;
    detail::graded_panels(hr, hr / ylevel, 1.0, hr, yedges);  // uniform panels in y
    detail::graded_panels(tau_max, tau_panel, 1.6, std::min(8.0, tau_max), tedges);
    static const double gx[3] = {0.5 * (1.0 - std::sqrt(0.6)), 0.5, 0.5 * (1.0 + std::sqrt(0.6))};
    static const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

    // tensor nodes along one y direction: both signs of each panel
    std::vector<double> yn, yw;
    for (std::size_t ipan = 0; ipan + 1 < yedges.size(); ++ipan) {
      const double lo = yedges[ipan], len = yedges[ipan + 1] - yedges[ipan];
      for (int g = 0; g < 3; ++g) {
        yn.push_back(lo + gx[g] * len);
        yw.push_back(gw[g] * len);
        yn.push_back(-(lo + gx[g] * len));
        yw.push_back(gw[g] * len);
      }
    }
    std::vector<double> tn, twq;
    for (std::size_t ipan = 0; ipan + 1 < tedges.size(); ++ipan) {
      const double lo = tedges[ipan], len = tedges[ipan + 1] - tedges[ipan];
      for (int g = 0; g < 3; ++g) {
        tn.push_back(lo + gx[g] * len);
        twq.push_back(gw[g] * len);
      }
    }

    double qnum = 0.0, qbnd = 0.0, nrm = 0.0;
    Eigen::Matrix2d g, gi;
    double rootg;
    for (std::size_t iy1 = 0; iy1 < yn.size(); ++iy1) {
      const double y1 = yn[iy1];
      double chi1, dchi1;
      detail::cutoff(y1 / hr, chi1, dchi1);
      dchi1 /= hr;
      if (chi1 == 0.0) continue;
      const double phi = flat_band ? 1.0 : std::exp(-std::abs(b3) * y1 * y1 / (2.0 * h));
      const double dphi = flat_band ? 0.0 : -(std::abs(b3) * y1 / h) * phi;
      for (std::size_t iy2 = 0; iy2 < yn.size(); ++iy2) {
        const double y2 = yn[iy2];
        double chi2, dchi2;
        detail::cutoff(y2 / hr, chi2, dchi2);
        dchi2 /= hr;
        if (chi2 == 0.0) continue;
        const double wqy = yw[iy1] * yw[iy2];
        const detail::FramePoint fp = detail::frame_point(fr, y1, y2);
        // gradient of the quadratic gauge phase; the part of the linearized
        // potential it cannot reach is the curl band b3*y1 handled by phi
        const double dw1 = A10 + a11 * y1 + a12 * y2;
        const double dw2 = A20 + a12 * y1 + a22 * y2;

        // boundary term (depth zero): chi3 = 1, f(0)^2 = 2
        {
          const double R0 = chi1 * chi2 * std::sqrt(2.0) * phi;
          const double rg0 = std::sqrt(fp.G.determinant());
          qbnd -= std::pow(h, alpha_exp) * wqy * rg0 * R0 * R0;
        }

        // rays for the normal-gauge gradient along this surface point
        const detail::FramePoint sh[4] = {
            detail::frame_point(fr, y1 - eps, y2), detail::frame_point(fr, y1 + eps, y2),
            detail::frame_point(fr, y1, y2 - eps), detail::frame_point(fr, y1, y2 + eps)};
        double phig[4] = {0.0, 0.0, 0.0, 0.0};
        auto a3 = [&A](const detail::FramePoint& q, double s) {
          return -q.n.dot(A(q.x - s * q.n));
        };
        double sprev = 0.0;
        for (std::size_t it = 0; it < tn.size(); ++it) {
          const double tau = tn[it];
          const double y3 = hs * tau;
          {
            const double mid = 0.5 * (sprev + y3), half = 0.5 * (y3 - sprev);
            const double d = half / std::sqrt(3.0);
            for (int r = 0; r < 4; ++r)
              phig[r] += half * (a3(sh[r], mid - d) + a3(sh[r], mid + d));
            sprev = y3;
          }
          double chi3, dchi3;
          detail::cutoff(y3 / hr, chi3, dchi3);
          dchi3 /= hr;
          if (chi3 == 0.0) continue;
          const double f = std::sqrt(2.0) * std::exp(-tau);
          const double df3 = -f / hs;  // d/dy3 of f(y3/hs)

          detail::shell_metric(fp, y3, g, gi, rootg);
          const Eigen::Vector3d Ax = A(fp.x - y3 * fp.n);
          const double At1 = (fp.e1 - y3 * fp.dn1).dot(Ax) - (phig[1] - phig[0]) / (2.0 * eps);
          const double At2 = (fp.e2 - y3 * fp.dn2).dot(Ax) - (phig[3] - phig[2]) / (2.0 * eps);

          const double R = chi1 * chi2 * chi3 * f * phi;
          const double dR1 = (dchi1 * phi + chi1 * dphi) * chi2 * chi3 * f;
          const double dR2 = chi1 * dchi2 * chi3 * f * phi;
          const double dR3 = chi1 * chi2 * (dchi3 * f + chi3 * df3) * phi;
          const double m1 = At1 - dw1;
          const double m2 = At2 - dw2;
          const double wq = wqy * twq[it] * hs * rootg;
          qnum += wq * (h * h * (dR3 * dR3 + gi(0, 0) * dR1 * dR1 +
                                 2.0 * gi(0, 1) * dR1 * dR2 + gi(1, 1) * dR2 * dR2) +
                        R * R * (gi(0, 0) * m1 * m1 + 2.0 * gi(0, 1) * m1 * m2 +
                                 gi(1, 1) * m2 * m2));
          nrm += wq * R * R;
        }
      }
    }
    if (!(nrm > 0.0) || !std::isfinite(qnum + qbnd))
      throw QuadratureError("trial quadrature degenerated");
    return (qnum + qbnd) / nrm;
  };

  const double q1 = quotient(12, 0.5);
  const double q2 = quotient(18, 1.0 / 3.0);
  const double delta = std::abs(q2 - q1);
  if (delta > 1e-3 * (1.0 + std::abs(q2)))
    throw QuadratureError("trial quadrature did not settle: levels differ by " +
                          std::to_string(delta));
  return q2 + delta;
}

}  // namespace magrobin
