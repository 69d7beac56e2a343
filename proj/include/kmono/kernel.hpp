#pragma once

// Scaled Beta(1,k) kernels and their scale mixtures on (0,1).
//
//   psi_k(x, theta) = (k / theta) * (1 - x / theta)_+^(k-1)
//
// A k-monotone density on (0,1) is represented as
//
//   g(x) = beta0 + (1 - beta0) * sum_l w_l psi_k(x, theta_l).

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"

namespace kmono {

struct KernelParams
{
  int k{ 1 };
  double theta{ 1.0 };

  void validate() const
  {
    if (k < 1)
      throw ParameterError("kernel order k must be >= 1, got " +
                           std::to_string(k));
    if (!(theta > 0.0) || !(theta <= 1.0))
      throw ParameterError("kernel scale theta must lie in (0,1], got " +
                           std::to_string(theta));
  }
};

namespace detail {

inline double
ipow(double base, int e)
{
  double r = 1.0;
  while (e > 0) {
    if (e & 1)
      r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

// Unchecked kernel; callers validate parameters once.
inline double
psi_unchecked(int k, double theta, double x)
{
  if (x >= theta)
    return 0.0;
  if (x < 0.0)
    x = 0.0;
  return k / theta * ipow(1.0 - x / theta, k - 1);
}

} // namespace detail

//! Kernel density. At x = 0 returns the right limit k/theta.
inline double
psi_pdf(const KernelParams& p, double x)
{
  p.validate();
  return detail::psi_unchecked(p.k, p.theta, x);
}

inline double
psi_cdf(const KernelParams& p, double x)
{
  p.validate();
  if (x <= 0.0)
    return 0.0;
  if (x >= p.theta)
    return 1.0;
  return 1.0 - detail::ipow(1.0 - x / p.theta, p.k);
}

//! Inverse-CDF transform of u in (0,1).
inline double
psi_sample(const KernelParams& p, double u)
{
  p.validate();
  if (!(u > 0.0 && u < 1.0))
    throw ParameterError("psi_sample needs u in (0,1)");
  if (p.k == 1)
    return p.theta * u;
  // 1 - (1-u)^(1/k) via expm1/log1p keeps precision for small u
  return -p.theta * std::expm1(std::log1p(-u) / p.k);
}

//! Exact L1 distance between psi_k(., theta) and psi_k(., theta_prime).
inline double
psi_l1_distance(int k, double theta, double theta_prime)
{
  KernelParams{ k, theta }.validate();
  KernelParams{ k, theta_prime }.validate();
  double lo = std::min(theta, theta_prime);
  double hi = std::max(theta, theta_prime);
  if (lo == hi)
    return 0.0;
  if (k == 1)
    return 2.0 * (1.0 - lo / hi);

  // The kernels cross once at x0 in (0, lo), where
  // (k-1) log((hi-x)/(lo-x)) = k log(hi/lo); the left side increases in x.
  const double target = k * std::log(hi / lo);
  auto f = [&](double x) {
    return (k - 1) * std::log((hi - x) / (lo - x)) - target;
  };
  double a = 0.0, b = lo;
  for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
    double mid = 0.5 * (a + b);
    if (f(mid) < 0.0)
      a = mid;
    else
      b = mid;
  }
  double x0 = 0.5 * (a + b);
  return 2.0 * detail::ipow(1.0 - x0 / hi, k - 1) * (1.0 - lo / hi);
}

struct Atom
{
  double theta;
  double weight;

  bool operator==(const Atom&) const = default;
};

//! A k-monotone density: uniform component plus a discrete psi_k mixture.
//!
//! Atoms are kept sorted by theta; atoms closer than 1e-14 are merged. The
//! atom weights sum to one (they describe the mixing part only). An empty
//! atom list is allowed only when beta0 == 1.
class KMixture
{
public:
  static constexpr double weight_tol = 1e-12;
  static constexpr double merge_tol = 1e-14;

  KMixture() = default;

  KMixture(int k, double beta0, std::vector<Atom> atoms)
    : k_(k)
    , beta0_(beta0)
    , atoms_(std::move(atoms))
  {
    canonicalize();
    validate();
  }

  //! Builds a mixture after rescaling the weights to sum to one.
  static KMixture normalized(int k, double beta0, std::vector<Atom> atoms)
  {
    double s = 0.0;
    for (const auto& a : atoms)
      s += a.weight;
    if (!(s > 0.0)) {
      if (beta0 == 1.0)
        return KMixture(k, beta0, {});
      throw ParameterError("mixture weights must have positive sum");
    }
    for (auto& a : atoms)
      a.weight /= s;
    return KMixture(k, beta0, std::move(atoms));
  }

  int k() const { return k_; }
  double beta0() const { return beta0_; }
  const std::vector<Atom>& atoms() const { return atoms_; }

  double pdf(double x) const
  {
    if (beta0_ == 1.0)
      return 1.0;
    double s = 0.0;
    for (const auto& a : atoms_)
      s += a.weight * detail::psi_unchecked(k_, a.theta, x);
    return beta0_ + (1.0 - beta0_) * s;
  }

  double cdf(double x) const
  {
    if (x <= 0.0)
      return 0.0;
    if (x >= 1.0)
      return 1.0;
    double s = 0.0;
    for (const auto& a : atoms_)
      s += a.weight * psi_cdf({ k_, a.theta }, x);
    return beta0_ * x + (1.0 - beta0_) * s;
  }

  //! Ancestral sampling: u_component picks the component, u_value is pushed
  //! through that component's inverse CDF.
  double sample(double u_component, double u_value) const
  {
    if (u_component < beta0_ || atoms_.empty())
      return u_value;
    double u = (u_component - beta0_) / (1.0 - beta0_);
    double acc = 0.0;
    for (const auto& a : atoms_) {
      acc += a.weight;
      if (u < acc)
        return psi_sample({ k_, a.theta }, u_value);
    }
    return psi_sample({ k_, atoms_.back().theta }, u_value);
  }

  //! Scale parameters, where the density has kinks.
  std::vector<double> breakpoints() const
  {
    std::vector<double> b;
    b.reserve(atoms_.size());
    for (const auto& a : atoms_)
      if (a.theta < 1.0)
        b.push_back(a.theta);
    return b;
  }

  bool operator==(const KMixture&) const = default;

private:
  void canonicalize()
  {
    std::sort(atoms_.begin(), atoms_.end(), [](const Atom& a, const Atom& b) {
      return a.theta < b.theta;
    });
    std::vector<Atom> merged;
    merged.reserve(atoms_.size());
    for (const auto& a : atoms_) {
      if (!merged.empty() && a.theta - merged.back().theta <= merge_tol)
        merged.back().weight += a.weight;
      else
        merged.push_back(a);
    }
    atoms_ = std::move(merged);
  }

  void validate() const
  {
    if (k_ < 1)
      throw ParameterError("mixture order k must be >= 1");
    if (!(beta0_ >= 0.0 && beta0_ <= 1.0))
      throw ParameterError("beta0 must lie in [0,1]");
    if (atoms_.empty()) {
      if (beta0_ != 1.0)
        throw ParameterError("mixture without atoms needs beta0 == 1");
      return;
    }
    double s = 0.0;
    for (const auto& a : atoms_) {
      if (!(a.theta > 0.0 && a.theta <= 1.0))
        throw ParameterError("atom theta must lie in (0,1]");
      if (!(a.weight >= 0.0) || !std::isfinite(a.weight))
        throw ParameterError("atom weights must be finite and >= 0");
      s += a.weight;
    }
    if (std::abs(s - 1.0) > weight_tol)
      throw ParameterError("atom weights must sum to 1");
  }

  int k_{ 1 };
  double beta0_{ 1.0 };
  std::vector<Atom> atoms_;
};

inline void
to_json(nlohmann::json& j, const KMixture& m)
{
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : m.atoms())
    atoms.push_back({ a.theta, a.weight });
  j = nlohmann::json{ { "k", m.k() }, { "beta0", m.beta0() }, { "atoms", atoms } };
}

inline void
from_json(const nlohmann::json& j, KMixture& m)
{
  std::vector<Atom> atoms;
  for (const auto& a : j.at("atoms"))
    atoms.push_back({ a.at(0).get<double>(), a.at(1).get<double>() });
  m = KMixture(j.at("k").get<int>(), j.at("beta0").get<double>(), std::move(atoms));
}

} // namespace kmono
