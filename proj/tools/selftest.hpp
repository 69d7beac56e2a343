#pragma once

// Fast invariant checks behind `kmono selftest`.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <kmono/baselines.hpp>
#include <kmono/checks.hpp>
#include <kmono/kernel.hpp>
#include <kmono/metrics.hpp>
#include <kmono/rng.hpp>
#include <kmono/simgen.hpp>

namespace selftest {

using namespace kmono;

struct Invariant
{
  std::string name;
  // returns an empty string on success, else a failure detail
  std::function<std::string()> check;
};

using Kernel = std::function<double(int, double, double)>;

inline double
kernel_reference(int k, double theta, double x)
{
  return psi_pdf({ k, theta }, x);
}

// Deliberately wrong kernel: drops the positive-part clamp, so it stays
// positive beyond theta.
inline double
kernel_faulty(int k, double theta, double x)
{
  return k / theta * detail::ipow(std::abs(1.0 - x / theta), k - 1);
}

inline std::string
fmt(const char* what, double got, double want)
{
  return std::string(what) + ": got " + std::to_string(got) + ", expected " + std::to_string(want);
}

inline std::vector<Invariant>
invariants(Kernel psi)
{
  std::vector<Invariant> v;

  v.push_back({ "psi support", [psi] {
                 for (int k = 1; k <= 10; ++k)
                   for (double theta : { 0.05, 0.3, 0.77, 1.0 })
                     for (int j = 0; j <= 50; ++j) {
                       double x = theta + (1.0 - theta) * j / 50.0;
                       if (x < 1.0 && psi(k, theta, x) != 0.0)
                         return fmt("psi beyond theta", psi(k, theta, x), 0.0);
                     }
                 return std::string();
               } });

  v.push_back({ "psi normalization", [psi] {
                 for (int k = 1; k <= 10; ++k)
                   for (double theta : { 0.05, 0.3, 0.77, 1.0 }) {
                     double s = checks::adaptive_integral([&](double x) { return psi(k, theta, x); }, 0.0, 1.0, { theta });
                     if (std::abs(s - 1.0) > 1e-9)
                       return fmt("integral", s, 1.0);
                   }
                 return std::string();
               } });

  v.push_back({ "cdf round trip", [] {
                 Engine rng(derive_seed(1, { 1 }));
                 for (int i = 0; i < 10000; ++i) {
                   int k = 1 + static_cast<int>(uniform_open(rng) * 10);
                   double theta = uniform_open(rng), u = uniform_open(rng);
                   double back = psi_cdf({ k, theta }, psi_sample({ k, theta }, u));
                   if (std::abs(back - u) > 1e-12)
                     return fmt("cdf(sample(u))", back, u);
                 }
                 return std::string();
               } });

  v.push_back({ "l1 closed form", [] {
                 Engine rng(derive_seed(1, { 2 }));
                 for (int i = 0; i < 60; ++i) {
                   int k = 1 + static_cast<int>(uniform_open(rng) * 10);
                   double a = uniform_open(rng), b = uniform_open(rng);
                   double exact = psi_l1_distance(k, a, b);
                   double quad = checks::adaptive_integral(
                     [&](double x) { return std::abs(psi_pdf({ k, a }, x) - psi_pdf({ k, b }, x)); }, 0.0, 1.0,
                     { std::min(a, b), std::max(a, b) });
                   if (std::abs(exact - quad) > 1e-6)
                     return fmt("closed form vs quadrature", exact, quad);
                 }
                 return std::string();
               } });

  v.push_back({ "grenander lcm oracle", [] {
                 Engine rng(derive_seed(1, { 3 }));
                 for (int t = 0; t < 100; ++t) {
                   int n = 1 + static_cast<int>(uniform_open(rng) * 30);
                   std::vector<double> x(static_cast<std::size_t>(n));
                   for (auto& e : x)
                     e = uniform_open(rng) * uniform_open(rng);
                   auto fast = grenander(x);
                   auto slow = checks::reference_lcm(x);
                   if (fast.breakpoints != slow.breakpoints || fast.heights != slow.heights)
                     return std::string("hull differs from brute force at n=") + std::to_string(n);
                 }
                 return std::string();
               } });

  v.push_back({ "convex kkt", [] {
                 auto x = sample_density(density_spec("g2"), 300, 17);
                 auto fit = convex_npmle(x);
                 if (!fit.converged)
                   return std::string("convex fit did not converge");
                 double worst = 0.0;
                 for (double th : fit.candidates)
                   worst = std::max(worst, convex_gradient(fit, x, th));
                 worst = std::max(worst, convex_gradient_uniform(fit, x));
                 if (worst > 1.0 + 1e-5)
                   return fmt("max gradient", worst, 1.0);
                 if (fit.loglik > grenander(x).loglik(x) + 1e-8)
                   return std::string("convex log-likelihood exceeds the monotone one");
                 return std::string();
               } });

  v.push_back({ "distance relations", [] {
                 Engine rng(derive_seed(1, { 4 }));
                 for (int t = 0; t < 20; ++t) {
                   auto mix = [&] {
                     std::vector<Atom> a;
                     for (int l = 0; l < 3; ++l)
                       a.push_back({ 0.05 + 0.95 * uniform_open(rng), uniform_open(rng) });
                     return KMixture::normalized(2, uniform_open(rng), a);
                   };
                   auto f = DensityFn::from(mix()), g = DensityFn::from(mix());
                   double h = hellinger(f, g), l1 = l1_distance(f, g);
                   if (h * h > l1 + 1e-9 || l1 > 2.0 * h + 1e-9)
                     return fmt("l1 against hellinger", l1, h);
                 }
                 return std::string();
               } });
  return v;
}

} // namespace selftest
