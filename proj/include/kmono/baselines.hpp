#pragma once

// Frequentist shape-constrained comparators on [0,1]:
//  - the Grenander estimator (NPMLE of a nonincreasing density), and
//  - the NPMLE over convex nonincreasing densities, written as a constant
//    plus a mixture of psi_2 kernels and fitted by a constrained Newton /
//    vertex-direction method.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "error.hpp"
#include "kernel.hpp"
#include "nnls.hpp"

namespace kmono {

//! Piecewise-constant density: heights[j] on (breakpoints[j], breakpoints[j+1]].
struct StepDensity
{
  std::vector<double> breakpoints;
  std::vector<double> heights;

  double pdf(double x) const
  {
    if (heights.empty() || x > breakpoints.back())
      return 0.0;
    auto it = std::lower_bound(breakpoints.begin(), breakpoints.end(), x);
    auto seg = std::max<std::ptrdiff_t>(0, (it - breakpoints.begin()) - 1);
    return heights[static_cast<std::size_t>(std::min<std::ptrdiff_t>(seg, static_cast<std::ptrdiff_t>(heights.size()) - 1))];
  }

  double integral() const
  {
    double s = 0.0;
    for (std::size_t j = 0; j < heights.size(); ++j)
      s += heights[j] * (breakpoints[j + 1] - breakpoints[j]);
    return s;
  }

  double loglik(std::span<const double> data) const
  {
    double s = 0.0;
    for (double x : data)
      s += std::log(pdf(x));
    return s;
  }
};

//! Left derivative of the least concave majorant of the empirical CDF on
//! [0,1]. Hull of (0,0), (x_(i), i/n), (1,1) by a monotone-chain pass.
inline StepDensity
grenander(std::span<const double> data)
{
  if (data.empty())
    throw ParameterError("grenander: empty data");
  std::vector<double> x(data.begin(), data.end());
  std::sort(x.begin(), x.end());
  if (x.front() < 0.0 || x.back() > 1.0)
    throw ParameterError("grenander: data must lie in [0,1]");
  const auto n = x.size();

  // ECDF corners; counts kept as integers so the heights are exact ratios
  struct Pt
  {
    double x;
    std::size_t c;
  };
  std::vector<Pt> pts{ { 0.0, 0 } };
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] == 0.0)
      pts.front().c = i + 1;
    else if (pts.back().x == x[i])
      pts.back().c = i + 1;
    else
      pts.push_back({ x[i], i + 1 });
  }
  if (pts.back().x < 1.0)
    pts.push_back({ 1.0, n });

  std::vector<Pt> hull;
  for (const auto& p : pts) {
    while (hull.size() >= 2) {
      const auto& o = hull[hull.size() - 2];
      const auto& a = hull.back();
      double cross = (a.x - o.x) * static_cast<double>(p.c - o.c) -
                     static_cast<double>(a.c - o.c) * (p.x - o.x);
      if (cross >= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(p);
  }

  StepDensity d;
  d.breakpoints.push_back(hull.front().x);
  for (std::size_t j = 1; j < hull.size(); ++j) {
    d.breakpoints.push_back(hull[j].x);
    d.heights.push_back(static_cast<double>(hull[j].c - hull[j - 1].c) /
                        static_cast<double>(n) / (hull[j].x - hull[j - 1].x));
  }
  return d;
}

//! Convex nonincreasing density w_unif + sum_l w_l psi_2(x, theta_l).
struct ConvexFit
{
  std::vector<Atom> atoms;
  double w_unif{ 1.0 };
  bool converged{ false };
  int iterations{ 0 };
  double loglik{ 0.0 };
  double max_gradient{ 0.0 };
  //! Final candidate scales (after refinement), over which optimality holds.
  std::vector<double> candidates;
  //! Log-likelihood at the start and after every accepted step.
  std::vector<double> loglik_trace;

  double pdf(double x) const
  {
    double s = w_unif;
    for (const auto& a : atoms)
      s += a.weight * detail::psi_unchecked(2, a.theta, x);
    return s;
  }

  double loglik_of(std::span<const double> data) const
  {
    double s = 0.0;
    for (double x : data)
      s += std::log(pdf(x));
    return s;
  }
};

//! Value of the fitted density at x = 1; every psi_2 kernel with theta <= 1
//! vanishes there, so this is the constant weight.
inline double
pi0_from_convex(const ConvexFit& fit)
{
  return fit.w_unif;
}

namespace detail {

// Directional derivatives D(theta) = (1/n) sum_i psi_2(x_i, theta) / g(x_i)
// for sorted x, evaluated through prefix sums of 1/g and x/g.
class GradientOracle
{
public:
  GradientOracle(const std::vector<double>& xs, const std::vector<double>& g)
    : xs_(xs)
    , s0_(xs.size() + 1, 0.0)
    , s1_(xs.size() + 1, 0.0)
  {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      s0_[i + 1] = s0_[i] + 1.0 / g[i];
      s1_[i + 1] = s1_[i] + xs[i] / g[i];
    }
  }

  double uniform() const { return s0_.back() / static_cast<double>(xs_.size()); }

  double operator()(double theta) const
  {
    auto m = static_cast<std::size_t>(std::lower_bound(xs_.begin(), xs_.end(), theta) - xs_.begin());
    double v = 2.0 / theta * (s0_[m] - s1_[m] / theta);
    return std::max(v, 0.0) / static_cast<double>(xs_.size());
  }

private:
  const std::vector<double>& xs_;
  std::vector<double> s0_, s1_;
};

} // namespace detail

//! D(theta) for a fitted convex density on the given data.
inline double
convex_gradient(const ConvexFit& fit, std::span<const double> data, double theta)
{
  std::vector<double> xs(data.begin(), data.end());
  std::sort(xs.begin(), xs.end());
  std::vector<double> g(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    g[i] = fit.pdf(xs[i]);
  return detail::GradientOracle(xs, g)(theta);
}

//! Gradient of the constant direction, (1/n) sum_i 1 / g(x_i).
inline double
convex_gradient_uniform(const ConvexFit& fit, std::span<const double> data)
{
  double s = 0.0;
  for (double x : data)
    s += 1.0 / fit.pdf(x);
  return s / static_cast<double>(data.size());
}

//! NPMLE over convex nonincreasing densities on [0,1].
//!
//! Candidate scales: grid_size equally spaced points in (min(data), 1] plus
//! the data points, refined once around the active atoms. Each iteration
//! adds the local maxima of D above 1, takes a constrained Newton step (an
//! NNLS problem over the active set) and backtracks until the
//! log-likelihood increases. Stops when max D <= 1 + tol after refinement.
inline ConvexFit
convex_npmle(std::span<const double> data, int grid_size = 512, int max_iter = 500, double tol = 1e-6)
{
  if (data.size() < 2)
    throw ParameterError("convex_npmle: need at least two observations");
  if (grid_size < 2 || max_iter < 1 || !(tol > 0.0))
    throw ParameterError("convex_npmle: invalid solver settings");
  std::vector<double> xs(data.begin(), data.end());
  std::sort(xs.begin(), xs.end());
  if (xs.front() < 0.0 || xs.back() > 1.0)
    throw ParameterError("convex_npmle: data must lie in [0,1]");
  const auto n = xs.size();
  const double xmin = xs.front();

  std::vector<double> cand;
  for (int j = 1; j <= grid_size; ++j)
    cand.push_back(xmin + (1.0 - xmin) * j / grid_size);
  for (double x : xs)
    if (x > xmin)
      cand.push_back(x);
  auto tidy = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  tidy(cand);

  // active set: uniform weight + atoms
  double wu = 1.0;
  std::vector<Atom> act;

  auto density = [&](double u, const std::vector<Atom>& at) {
    std::vector<double> g(n, u);
    for (const auto& a : at)
      for (std::size_t i = 0; i < n && xs[i] < a.theta; ++i)
        g[i] += a.weight * detail::psi_unchecked(2, a.theta, xs[i]);
    return g;
  };
  auto loglik = [&](const std::vector<double>& g) {
    double s = 0.0;
    for (double v : g)
      s += std::log(v);
    return s;
  };

  std::vector<double> g = density(wu, act);
  double ll = loglik(g);
  bool refined = false;
  ConvexFit fit;
  fit.loglik_trace.push_back(ll);

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    detail::GradientOracle D(xs, g);
    std::vector<double> dv(cand.size());
    double dmax = D.uniform();
    for (std::size_t j = 0; j < cand.size(); ++j) {
      dv[j] = D(cand[j]);
      dmax = std::max(dmax, dv[j]);
    }
    if (dmax <= 1.0 + tol) {
      if (refined) {
        fit.converged = true;
        break;
      }
      // one refinement pass around the current support
      std::vector<double> extra;
      for (const auto& a : act) {
        auto it = std::lower_bound(cand.begin(), cand.end(), a.theta);
        double lo = it == cand.begin() ? xmin : *(it - 1);
        double hi = (it == cand.end() || it + 1 == cand.end()) ? 1.0 : *(it + 1);
        for (int r = 1; r < 16; ++r)
          extra.push_back(lo + (hi - lo) * r / 16.0);
      }
      cand.insert(cand.end(), extra.begin(), extra.end());
      tidy(cand);
      refined = true;
      continue;
    }

    // new directions: local maxima of D above 1
    std::vector<double> thetas;
    for (const auto& a : act)
      thetas.push_back(a.theta);
    for (std::size_t j = 0; j < cand.size(); ++j) {
      bool left = j == 0 || dv[j] >= dv[j - 1];
      bool right = j + 1 == cand.size() || dv[j] > dv[j + 1];
      if (left && right && dv[j] > 1.0)
        thetas.push_back(cand[j]);
    }
    tidy(thetas);

    // Newton step: min || S b - 2 || over b >= 0, sum b = 1, S_ij = A_ij / g_i.
    // The sum constraint enters as a heavily weighted extra row.
    const auto p = static_cast<Eigen::Index>(thetas.size()) + 1;
    const auto rows = static_cast<Eigen::Index>(n) + 1;
    const double gamma = 1e3 * std::sqrt(static_cast<double>(n));
    Eigen::MatrixXd S(rows, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Constant(rows, 2.0);
    for (std::size_t i = 0; i < n; ++i) {
      S(static_cast<Eigen::Index>(i), 0) = 1.0 / g[i];
      for (std::size_t c = 0; c < thetas.size(); ++c)
        S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c) + 1) =
          detail::psi_unchecked(2, thetas[c], xs[i]) / g[i];
    }
    S.row(rows - 1).setConstant(gamma);
    rhs[rows - 1] = gamma;
    auto sol = nnls(S, rhs);
    double tot = sol.x.sum();
    if (!(tot > 0.0))
      throw NumericError("convex_npmle: degenerate Newton step");
    Eigen::VectorXd target = sol.x / tot;

    Eigen::VectorXd cur = Eigen::VectorXd::Zero(p);
    cur[0] = wu;
    for (const auto& a : act) {
      auto c = std::lower_bound(thetas.begin(), thetas.end(), a.theta) - thetas.begin();
      cur[c + 1] = a.weight;
    }
    Eigen::VectorXd dir = target - cur;
    // directional derivative of the log-likelihood along dir
    double slope = 0.0;
    for (Eigen::Index c = 0; c < p; ++c)
      slope += dir[c] * (c == 0 ? D.uniform() : D(thetas[static_cast<std::size_t>(c - 1)]));
    slope *= static_cast<double>(n);

    double step = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt, step *= 0.5) {
      Eigen::VectorXd w = cur + step * dir;
      double nu = std::max(0.0, w[0]);
      std::vector<Atom> na;
      for (std::size_t c = 0; c < thetas.size(); ++c) {
        double v = w[static_cast<Eigen::Index>(c) + 1];
        if (v > 0.0)
          na.push_back({ thetas[c], v });
      }
      auto ng = density(nu, na);
      double nll = loglik(ng);
      if (std::isfinite(nll) && nll >= ll + step * slope / 3.0) {
        wu = nu;
        act = std::move(na);
        g = std::move(ng);
        ll = nll;
        fit.loglik_trace.push_back(ll);
        accepted = true;
        break;
      }
    }
    if (!accepted)
      break;
  }

  fit.w_unif = wu;
  fit.atoms = act;
  fit.iterations = iter;
  fit.loglik = ll;
  fit.candidates = cand;
  {
    detail::GradientOracle D(xs, g);
    double dmax = D.uniform();
    for (double c : cand)
      dmax = std::max(dmax, D(c));
    fit.max_gradient = dmax;
    if (dmax <= 1.0 + tol)
      fit.converged = true;
  }
  return fit;
}

inline void
to_json(nlohmann::json& j, const StepDensity& d)
{
  j = nlohmann::json{ { "breakpoints", d.breakpoints }, { "heights", d.heights } };
}

inline void
from_json(const nlohmann::json& j, StepDensity& d)
{
  d.breakpoints = j.at("breakpoints").get<std::vector<double>>();
  d.heights = j.at("heights").get<std::vector<double>>();
}

inline void
to_json(nlohmann::json& j, const ConvexFit& f)
{
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : f.atoms)
    atoms.push_back({ a.theta, a.weight });
  j = nlohmann::json{ { "atoms", atoms },
                      { "w_unif", f.w_unif },
                      { "converged", f.converged },
                      { "iterations", f.iterations } };
}

inline void
from_json(const nlohmann::json& j, ConvexFit& f)
{
  f.atoms.clear();
  for (const auto& a : j.at("atoms"))
    f.atoms.push_back({ a.at(0).get<double>(), a.at(1).get<double>() });
  f.w_unif = j.at("w_unif").get<double>();
  f.converged = j.at("converged").get<bool>();
  f.iterations = j.at("iterations").get<int>();
}

} // namespace kmono
