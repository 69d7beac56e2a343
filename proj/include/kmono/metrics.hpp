#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "kernel.hpp"
#include "nnls.hpp"
#include "quadrature.hpp"

namespace kmono {

//! An evaluable density on (0,1), plus the points where it has kinks or
//! jumps (used to place quadrature panels).
struct DensityFn
{
  std::function<double(double)> eval;
  std::vector<double> breaks;

  double operator()(double x) const { return eval(x); }

  static DensityFn from(const KMixture& m)
  {
    return { [m](double x) { return m.pdf(x); }, m.breakpoints() };
  }

  static DensityFn uniform()
  {
    return { [](double) { return 1.0; }, {} };
  }
};

//! Density values on a fixed evaluation grid.
struct GridDensity
{
  std::vector<double> grid;
  std::vector<double> values;

  //! x_j = j / K for j = 1..K.
  static std::vector<double> canonical_grid(int K = 100)
  {
    if (K < 1)
      throw ParameterError("grid size must be positive");
    std::vector<double> g(static_cast<std::size_t>(K));
    for (int j = 1; j <= K; ++j)
      g[static_cast<std::size_t>(j - 1)] = static_cast<double>(j) / K;
    return g;
  }

  static GridDensity tabulate(const DensityFn& f, std::vector<double> grid)
  {
    GridDensity d;
    d.values.reserve(grid.size());
    for (double x : grid)
      d.values.push_back(f(x));
    d.grid = std::move(grid);
    d.validate();
    return d;
  }

  void validate() const
  {
    if (grid.size() != values.size())
      throw ShapeError("grid and values differ in length");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!(grid[i] > 0.0 && grid[i] <= 1.0))
        throw ShapeError("grid points must lie in (0,1]");
      if (i > 0 && !(grid[i] > grid[i - 1]))
        throw ShapeError("grid must be strictly increasing");
      if (!std::isfinite(values[i]) || values[i] < 0.0)
        throw ShapeError("grid values must be finite and nonnegative");
    }
  }

  bool is_canonical() const
  {
    const auto K = static_cast<int>(grid.size());
    for (int j = 1; j <= K; ++j)
      if (std::abs(grid[static_cast<std::size_t>(j - 1)] - static_cast<double>(j) / K) > 1e-12)
        return false;
    return K > 0;
  }

  //! Trapezoid integral over the grid, closed at x = 0 with the first value.
  double trapezoid() const
  {
    double s = 0.0, px = 0.0, pv = values.empty() ? 0.0 : values.front();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      s += 0.5 * (values[i] + pv) * (grid[i] - px);
      px = grid[i];
      pv = values[i];
    }
    return s;
  }
};

inline void
write_csv(std::ostream& os, const GridDensity& d)
{
  std::ostringstream buf;
  buf.precision(17);
  buf << "x,value\n";
  for (std::size_t i = 0; i < d.grid.size(); ++i)
    buf << d.grid[i] << ',' << d.values[i] << '\n';
  os << buf.str();
}

inline GridDensity
read_grid_csv(std::istream& is)
{
  GridDensity d;
  std::string line;
  if (!std::getline(is, line))
    throw ShapeError("empty grid CSV");
  while (std::getline(is, line)) {
    if (line.empty())
      continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ShapeError("grid CSV row without a comma: " + line);
    d.grid.push_back(std::stod(line.substr(0, comma)));
    d.values.push_back(std::stod(line.substr(comma + 1)));
  }
  d.validate();
  return d;
}

namespace detail {

inline std::vector<double>
merged_breaks(const DensityFn& f, const DensityFn& g)
{
  std::vector<double> b = f.breaks;
  b.insert(b.end(), g.breaks.begin(), g.breaks.end());
  return b;
}

} // namespace detail

constexpr int default_quad_points = 4096;

//! d_H(f, g) = || sqrt f - sqrt g ||_2, so values lie in [0, sqrt 2].
inline double
hellinger(const DensityFn& f, const DensityFn& g, int quad_points = default_quad_points)
{
  CompositeRule rule(0.0, 1.0, quad_points, detail::merged_breaks(f, g));
  double s = rule.integrate([&](double x) {
    double d = std::sqrt(f(x)) - std::sqrt(g(x));
    return d * d;
  });
  double h = std::sqrt(s);
  if (!std::isfinite(h) || h > std::sqrt(2.0) + 0.01)
    throw NumericError("hellinger: integrand is not integrable (value " +
                       std::to_string(h) + ")");
  return h;
}

inline double
l1_distance(const DensityFn& f, const DensityFn& g, int quad_points = default_quad_points)
{
  CompositeRule rule(0.0, 1.0, quad_points, detail::merged_breaks(f, g));
  double s = rule.integrate([&](double x) { return std::abs(f(x) - g(x)); });
  if (!std::isfinite(s))
    throw NumericError("l1_distance: non-finite result");
  return s;
}

//! K(f, g) = int f log(f / g). The denominator is floored at 1e-300; if
//! the floored region carries more than 1e-6 of f's mass the divergence is
//! reported as infinite.
inline double
kl_divergence(const DensityFn& f, const DensityFn& g, int quad_points = default_quad_points)
{
  constexpr double floor = 1e-300;
  CompositeRule rule(0.0, 1.0, quad_points, detail::merged_breaks(f, g));
  double kl = 0.0, lost = 0.0;
  const auto& xs = rule.nodes();
  const auto& ws = rule.weights();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double fx = f(xs[i]);
    if (fx <= 0.0)
      continue;
    double gx = g(xs[i]);
    if (gx < floor)
      lost += ws[i] * fx;
    kl += ws[i] * fx * std::log(fx / std::max(gx, floor));
  }
  if (lost > 1e-6)
    throw DivergenceError("kl_divergence: reference density vanishes on the support");
  if (!std::isfinite(kl))
    throw NumericError("kl_divergence: non-finite result");
  return std::max(kl, 0.0);
}

//! (1/K) sum_j (estimate(x_j) - truth(x_j))^2 on the canonical grid.
inline double
mse_grid(const GridDensity& estimate, const DensityFn& truth)
{
  estimate.validate();
  if (!estimate.is_canonical())
    throw ShapeError("mse_grid: estimate is not on the canonical j/K grid");
  double s = 0.0;
  for (std::size_t j = 0; j < estimate.grid.size(); ++j) {
    double d = estimate.values[j] - truth(estimate.grid[j]);
    s += d * d;
  }
  return s / static_cast<double>(estimate.grid.size());
}

namespace detail {

// Least-squares system reduced by a thin QR: ||A x - b|| = ||R x - Q'b|| + c.
struct ReducedSystem
{
  Eigen::MatrixXd R;
  Eigen::VectorXd rhs;

  ReducedSystem(const Eigen::MatrixXd& A, const Eigen::VectorXd& b)
  {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    const Eigen::Index n = A.cols();
    R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    rhs = (qr.householderQ().transpose() * b).head(n);
  }
};

inline double
fit_sup_error(const Eigen::MatrixXd& basis,
              const Eigen::VectorXd& target,
              const std::vector<Eigen::Index>& cols)
{
  if (cols.empty())
    return std::numeric_limits<double>::infinity();
  Eigen::MatrixXd A(basis.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    A.col(static_cast<Eigen::Index>(c)) = basis.col(cols[c]);
  ReducedSystem red(A, target);
  auto res = nnls(red.R, red.rhs);
  double s = res.x.sum();
  if (!(s > 0.0))
    return std::numeric_limits<double>::infinity();
  Eigen::VectorXd w = res.x / s;
  return (A * w - target).cwiseAbs().maxCoeff();
}

} // namespace detail

//! Sup-norm error (on a 2000-point grid) of the best nonnegative N-atom
//! psi_k mixture found for the mixing part (g - beta0) / (1 - beta0).
//!
//! Atoms come from 512 candidates theta_c = (c / 512)^3 in (0,1]. An NNLS pass
//! over all candidates (active set capped at 2N + 16) locates the support;
//! weights are then refit by NNLS on two atom families: the heaviest atoms
//! of that pass, and N candidates evenly spaced by index across its support. Each
//! family is also tried at the power-of-two sizes below N, so the result
//! never increases along N = 1, 2, 4, ... Weights are renormalized to sum
//! to one before the error is measured.
inline double
best_finite_mixture_error(const DensityFn& g, int k, int n_atoms, double beta0 = 0.0)
{
  if (k < 1 || n_atoms < 1)
    throw ParameterError("best_finite_mixture_error: k and n_atoms must be >= 1");
  if (!(beta0 >= 0.0 && beta0 < 1.0))
    throw ParameterError("best_finite_mixture_error: beta0 must lie in [0,1)");

  constexpr int n_grid = 2000;
  constexpr int n_cand = 512;
  // cubic grading puts candidates near 0, where densities with unbounded
  // derivatives at the origin need them
  auto theta = [](Eigen::Index c) {
    double u = static_cast<double>(c + 1) / n_cand;
    return u * u * u;
  };

  Eigen::VectorXd target(n_grid);
  Eigen::MatrixXd basis(n_grid, n_cand);
  for (int i = 0; i < n_grid; ++i) {
    double x = (i + 0.5) / n_grid;
    target[i] = (g(x) - beta0) / (1.0 - beta0);
    if (!std::isfinite(target[i]))
      throw NumericError("best_finite_mixture_error: target not finite at x=" + std::to_string(x));
    for (int c = 0; c < n_cand; ++c)
      basis(i, c) = detail::psi_unchecked(k, theta(c), x);
  }

  detail::ReducedSystem full_sys(basis, target);
  auto full = nnls(full_sys.R, full_sys.rhs, 2 * n_atoms + 16);
  std::vector<Eigen::Index> active;
  for (Eigen::Index c = 0; c < n_cand; ++c)
    if (full.x[c] > 0.0)
      active.push_back(c);
  if (active.empty())
    throw NumericError("best_finite_mixture_error: NNLS found no support");

  double best = std::numeric_limits<double>::infinity();
  if (static_cast<int>(active.size()) <= n_atoms)
    best = detail::fit_sup_error(basis, target, active);

  std::vector<int> sizes;
  for (int s = 1; s < n_atoms; s *= 2)
    sizes.push_back(s);
  sizes.push_back(n_atoms);

  const double lo = static_cast<double>(active.front());
  const double hi = static_cast<double>(active.back());
  for (int m : sizes) {
    std::vector<Eigen::Index> heavy = active;
    std::stable_sort(heavy.begin(), heavy.end(), [&](Eigen::Index a, Eigen::Index b) {
      return full.x[a] > full.x[b];
    });
    if (static_cast<int>(heavy.size()) > m)
      heavy.resize(static_cast<std::size_t>(m));
    std::sort(heavy.begin(), heavy.end());
    best = std::min(best, detail::fit_sup_error(basis, target, heavy));

    std::vector<Eigen::Index> spaced;
    for (int j = 0; j < m; ++j) {
      double pos = m == 1 ? hi : lo + (hi - lo) * j / (m - 1);
      spaced.push_back(static_cast<Eigen::Index>(std::lround(pos)));
    }
    spaced.erase(std::unique(spaced.begin(), spaced.end()), spaced.end());
    best = std::min(best, detail::fit_sup_error(basis, target, spaced));
  }
  if (!std::isfinite(best))
    throw NumericError("best_finite_mixture_error: no feasible fit");
  return best;
}

} // namespace kmono
