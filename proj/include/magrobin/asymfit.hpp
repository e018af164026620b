#pragma once

// Asymptotic expansion fitting and Richardson extrapolation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "magrobin/errors.hpp"

namespace magrobin {

struct FitReport {
  std::vector<double> exponents;
  std::vector<double> coefficients;
  double residual = 0.0;   // max relative residual over samples
  double condition = 0.0;  // of the column-scaled design matrix
  std::vector<std::pair<double, double>> samples;  // (parameter, value), sorted
};

// Least squares for value ~ sum_j c_j * h^{p_j}.  Samples are canonically
// sorted first, so permuting the input changes nothing.
inline FitReport fit_expansion(std::vector<std::pair<double, double>> samples,
                               const std::vector<double>& exponents) {
  const int m = static_cast<int>(exponents.size());
  const int n = static_cast<int>(samples.size());
  if (m == 0) throw DimensionError("empty exponent basis");
  for (int j = 1; j < m; ++j)
    if (!(exponents[j] > exponents[j - 1]))
      throw DimensionError("exponents must be strictly increasing");
  if (n < m + 1)
    throw DimensionError("need at least " + std::to_string(m + 1) + " samples, got " +
                         std::to_string(n));
  for (const auto& s : samples)
    if (!(s.first > 0) || !std::isfinite(s.first) || !std::isfinite(s.second))
      throw DimensionError("sample parameters must be positive and finite");
  std::sort(samples.begin(), samples.end());

  Eigen::MatrixXd X(n, m);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = samples[i].second;
    for (int j = 0; j < m; ++j) X(i, j) = std::pow(samples[i].first, exponents[j]);
  }
  Eigen::VectorXd scale(m);
  for (int j = 0; j < m; ++j) {
    scale[j] = X.col(j).norm();
    if (!(scale[j] > 0) || !std::isfinite(scale[j]))
      throw FitConditioning("design matrix column " + std::to_string(j) + " degenerate");
    X.col(j) /= scale[j];
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cond = sv[0] / sv[m - 1];
  if (!(sv[m - 1] > sv[0] * 1e-13))
    throw FitConditioning("design matrix numerically rank deficient, condition " +
                          std::to_string(cond));
  Eigen::VectorXd c = svd.solve(y);
  const Eigen::VectorXd r = X * c - y;
  for (int j = 0; j < m; ++j) c[j] /= scale[j];

  // relative to the data scale, so zero-valued samples stay well-defined
  double vmax = 0.0;
  for (int i = 0; i < n; ++i) vmax = std::max(vmax, std::abs(y[i]));
  const double rel = r.cwiseAbs().maxCoeff() / std::max(vmax, 1e-300);

  FitReport rep;
  rep.exponents = exponents;
  rep.coefficients.assign(c.data(), c.data() + m);
  rep.residual = rel;
  rep.condition = cond;
  rep.samples = std::move(samples);
  return rep;
}

struct RichardsonResult {
  double limit = 0.0;
  double observed_order = std::numeric_limits<double>::quiet_NaN();
  bool safe = true;  // false: non-monotone convergence, limit is the raw finest value
};

// Extrapolate values computed at resolutions N, 2N, 4N (last three are used)
// assuming error ~ C N^{-order}.
inline RichardsonResult richardson(const std::vector<double>& values, double order) {
  if (values.size() < 3) throw DimensionError("richardson needs at least three values");
  const double v1 = values[values.size() - 3];
  const double v2 = values[values.size() - 2];
  const double v3 = values[values.size() - 1];
  const double d1 = v2 - v1, d2 = v3 - v2;

  RichardsonResult out;
  if (d2 == 0.0) {
    // already converged at the finest grids (order undefined)
    out.limit = v3;
    return out;
  }
  if (d1 == 0.0 || (d1 > 0) != (d2 > 0) || std::abs(d2) >= std::abs(d1)) {
    out.limit = v3;
    out.safe = false;
    if (d1 != 0.0) out.observed_order = std::log2(std::abs(d1 / d2));
    return out;
  }
  out.observed_order = std::log2(std::abs(d1 / d2));
  out.limit = v3 + d2 / (std::pow(2.0, order) - 1.0);
  return out;
}

}  // namespace magrobin
