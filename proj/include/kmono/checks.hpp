#pragma once

// Slow reference implementations used to cross-check the fast code paths,
// plus goodness-of-fit helpers for sampler checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "baselines.hpp"
#include "error.hpp"

namespace kmono::checks {

//! O(n^2) least concave majorant of the ECDF on [0,1]: from each vertex,
//! jump to the farthest point of maximal slope.
inline StepDensity
reference_lcm(std::span<const double> data)
{
  if (data.empty())
    throw ParameterError("reference_lcm: empty data");
  std::vector<double> x(data.begin(), data.end());
  std::sort(x.begin(), x.end());
  const auto n = x.size();
  std::vector<double> px{ 0.0 };
  std::vector<std::size_t> pc{ 0 };
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] == px.back()) {
      pc.back() = i + 1;
    } else {
      px.push_back(x[i]);
      pc.push_back(i + 1);
    }
  }
  if (px.back() < 1.0) {
    px.push_back(1.0);
    pc.push_back(n);
  }

  StepDensity d;
  std::size_t cur = 0;
  d.breakpoints.push_back(px[0]);
  while (cur + 1 < px.size()) {
    std::size_t best = cur + 1;
    double best_slope = -1.0;
    for (std::size_t j = cur + 1; j < px.size(); ++j) {
      double s = static_cast<double>(pc[j] - pc[cur]) / (px[j] - px[cur]);
      if (s >= best_slope) {
        best_slope = s;
        best = j;
      }
    }
    d.breakpoints.push_back(px[best]);
    d.heights.push_back(static_cast<double>(pc[best] - pc[cur]) / static_cast<double>(n) / (px[best] - px[cur]));
    cur = best;
  }
  return d;
}

//! Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double
ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf)
{
  if (sample.empty())
    throw ParameterError("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max({ d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f });
  }
  return d;
}

//! True when the KS test does not reject at level alpha (asymptotic
//! critical value with the usual finite-n correction).
inline bool
ks_accepts(const std::vector<double>& sample, const std::function<double(double)>& cdf, double alpha)
{
  const double sn = std::sqrt(static_cast<double>(sample.size()));
  const double crit = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return ks_statistic(sample, cdf) * (sn + 0.12 + 0.11 / sn) <= crit;
}

//! Adaptive Gauss-Kronrod integral of f over [a,b], split at `breaks`.
inline double
adaptive_integral(const std::function<double(double)>& f, double a, double b, std::vector<double> breaks = {},
                  double tol = 1e-13)
{
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    double lo = std::max(a, breaks[i]), hi = std::min(b, breaks[i + 1]);
    if (hi > lo)
      s += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 20, tol);
  }
  return s;
}

} // namespace kmono::checks
