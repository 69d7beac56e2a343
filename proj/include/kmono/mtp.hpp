#pragma once

// Microarray-style p-value simulation and null-proportion estimation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <nlohmann/json.hpp>

#include "baselines.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "sampler.hpp"

namespace kmono {

enum class Sidedness
{
  one_sided,
  two_sided
};

inline std::string
to_string(Sidedness s)
{
  return s == Sidedness::one_sided ? "one-sided" : "two-sided";
}

inline Sidedness
sidedness_from_string(const std::string& s)
{
  if (s == "one-sided" || s == "one")
    return Sidedness::one_sided;
  if (s == "two-sided" || s == "two")
    return Sidedness::two_sided;
  throw ParameterError("sidedness must be one-sided or two-sided, got '" + s + "'");
}

struct MtpScenario
{
  int n_tests{ 2000 };
  int m{ 10 };
  double alpha0{ 0.9 };
  int block_size{ 50 };
  double rho{ 0.0 };
  Sidedness sidedness{ Sidedness::two_sided };
  double effect_a{ std::log2(1.2) };
  double effect_b{ 2.0 };

  void validate() const
  {
    if (n_tests < 1 || block_size < 1 || n_tests % block_size != 0)
      throw ParameterError("block size must divide the number of tests");
    if (m < 2)
      throw ParameterError("t statistics need m >= 2 replicates");
    if (!(alpha0 >= 0.0 && alpha0 <= 1.0))
      throw ParameterError("alpha0 must lie in [0,1]");
    if (!(rho >= 0.0 && rho < 1.0))
      throw ParameterError("rho must lie in [0,1)");
    if (!(effect_a >= 0.0 && effect_a < effect_b))
      throw ParameterError("effect support needs 0 <= a < b");
  }

  std::string label() const
  {
    std::ostringstream os;
    os << "a" << alpha0 << "_r" << rho << "_G" << block_size << '_' << to_string(sidedness);
    return os.str();
  }
};

struct PvalueSet
{
  std::vector<double> values;
  //! true marks a null test.
  std::vector<bool> truth_mask;
};

//! Triangular effect on [a,b] peaking at the midpoint; in the two-sided
//! case the sign is flipped with probability 1/2.
inline double
draw_effect(Engine& rng, double a, double b, Sidedness side)
{
  double mag = a + (b - a) * 0.5 * (uniform_open(rng) + uniform_open(rng));
  if (side == Sidedness::two_sided && uniform_open(rng) < 0.5)
    return -mag;
  return mag;
}

inline PvalueSet
simulate_pvalues(const MtpScenario& sc, std::uint64_t seed)
{
  sc.validate();
  Engine rng(seed);
  const auto n = static_cast<std::size_t>(sc.n_tests);

  boost::random::binomial_distribution<int> binom(sc.n_tests, sc.alpha0);
  const auto n0 = static_cast<std::size_t>(binom(rng));
  // partial Fisher-Yates picks the null positions
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  for (std::size_t i = 0; i < n0; ++i) {
    boost::random::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  PvalueSet out;
  out.truth_mask.assign(n, false);
  for (std::size_t i = 0; i < n0; ++i)
    out.truth_mask[order[i]] = true;
  std::vector<double> mu(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (!out.truth_mask[i])
      mu[i] = draw_effect(rng, sc.effect_a, sc.effect_b, sc.sidedness);

  const double sr = std::sqrt(sc.rho), sn = std::sqrt(1.0 - sc.rho);
  const auto G = static_cast<std::size_t>(sc.block_size);
  std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
  for (int r = 0; r < sc.m; ++r)
    for (std::size_t b = 0; b < n; b += G) {
      double shared = std_normal(rng);
      for (std::size_t i = b; i < b + G; ++i) {
        double x = mu[i] + sr * shared + sn * std_normal(rng);
        sum[i] += x;
        sumsq[i] += x * x;
      }
    }

  const double m = sc.m;
  boost::math::students_t tdist(m - 1.0);
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = sum[i] / m;
    double var = std::max(0.0, (sumsq[i] - m * mean * mean) / (m - 1.0));
    double t = mean * std::sqrt(m) / std::sqrt(var);
    double p = sc.sidedness == Sidedness::two_sided ? 2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(t)))
                                                    : boost::math::cdf(boost::math::complement(tdist, t));
    out.values[i] = std::clamp(p, std::numeric_limits<double>::min(), 1.0);
  }
  return out;
}

//! Values of exactly 1 moved to 1 - 1e-12.
inline std::vector<double>
open_unit(std::span<const double> p)
{
  std::vector<double> v(p.begin(), p.end());
  for (auto& x : v) {
    if (!(x > 0.0 && x <= 1.0))
      throw ParameterError("p-values must lie in (0,1]");
    if (x >= 1.0)
      x = 1.0 - 1e-12;
  }
  return v;
}

//! Posterior mean of the uniform weight under the DP mixture prior.
inline double
estimate_pi0_bayes(std::span<const double> p, const PriorConfig& prior, const SamplerConfig& cfg)
{
  auto v = open_unit(p);
  return posterior_mean_beta0(run_chain(v, prior, cfg));
}

inline double
estimate_pi0_convex(std::span<const double> p)
{
  auto v = open_unit(p);
  return pi0_from_convex(convex_npmle(v));
}

struct MtpRow
{
  std::size_t scenario{ 0 };
  int rep{ 0 };
  std::string method;
  double estimate{ 0.0 };
};

struct MtpResult
{
  std::vector<MtpScenario> scenarios;
  std::vector<MtpRow> rows;
  std::vector<int> failures; // per scenario

  std::vector<double> estimates(std::size_t scenario, const std::string& method) const
  {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.scenario == scenario && r.method == method)
        v.push_back(r.estimate);
    return v;
  }
};

struct MtpPlan
{
  std::vector<MtpScenario> scenarios;
  int replications{ 50 };
  std::uint64_t seed{ 1 };
  unsigned threads{ 0 };
  SamplerConfig chain;
  PriorConfig prior{ PriorConfig::adaptive_k() };
  double max_failure_rate{ 0.05 };
};

inline std::uint64_t
scenario_seed(std::uint64_t master, const MtpScenario& sc, int rep)
{
  return derive_seed(master, { hash_string(sc.label()), static_cast<std::uint64_t>(sc.n_tests),
                               static_cast<std::uint64_t>(sc.m), static_cast<std::uint64_t>(rep) });
}

//! Both estimators on every replication of every scenario.
inline MtpResult
run_mtp_experiment(const MtpPlan& plan)
{
  if (plan.replications < 1 || plan.scenarios.empty())
    throw ParameterError("mtp experiment needs scenarios and replications >= 1");
  for (const auto& sc : plan.scenarios)
    sc.validate();
  const std::size_t R = static_cast<std::size_t>(plan.replications);
  const std::size_t tasks = plan.scenarios.size() * R;
  constexpr double failed = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> bayes(tasks, failed), convex(tasks, failed);
  parallel_for(tasks, plan.threads, [&](std::size_t t) {
    const auto& sc = plan.scenarios[t / R];
    const int rep = static_cast<int>(t % R);
    auto seed = scenario_seed(plan.seed, sc, rep);
    auto pv = simulate_pvalues(sc, seed);
    try {
      SamplerConfig cfg = plan.chain;
      cfg.seed = derive_seed(seed, { hash_string("bayes") });
      bayes[t] = estimate_pi0_bayes(pv.values, plan.prior, cfg);
    } catch (const Error& e) {
      std::cerr << "warning: bayes failed on " << sc.label() << " rep=" << rep << ": " << e.what() << '\n';
    }
    try {
      convex[t] = estimate_pi0_convex(pv.values);
    } catch (const Error& e) {
      std::cerr << "warning: convex failed on " << sc.label() << " rep=" << rep << ": " << e.what() << '\n';
    }
  });

  MtpResult res;
  res.scenarios = plan.scenarios;
  res.failures.assign(plan.scenarios.size(), 0);
  for (std::size_t t = 0; t < tasks; ++t) {
    const auto s = t / R;
    const int rep = static_cast<int>(t % R);
    for (auto [name, v] : { std::pair{ "bayes", bayes[t] }, std::pair{ "convex", convex[t] } }) {
      if (std::isnan(v))
        ++res.failures[s];
      else
        res.rows.push_back({ s, rep, name, v });
    }
  }
  for (std::size_t s = 0; s < plan.scenarios.size(); ++s)
    if (res.failures[s] > plan.max_failure_rate * 2.0 * plan.replications)
      throw NumericError("scenario " + plan.scenarios[s].label() + ": " + std::to_string(res.failures[s]) +
                         " estimator runs failed");
  return res;
}

inline void
write_mtp_csv(std::ostream& os, const MtpResult& res)
{
  std::ostringstream buf;
  buf.precision(17);
  buf << "alpha0,rho,G,sidedness,rep,method,estimate\n";
  for (const auto& r : res.rows) {
    const auto& sc = res.scenarios[r.scenario];
    // shortest round-trip form for the scenario coordinates
    buf << nlohmann::json(sc.alpha0).dump() << ',' << nlohmann::json(sc.rho).dump() << ',' << sc.block_size << ',' << to_string(sc.sidedness) << ',' << r.rep
        << ',' << r.method << ',' << r.estimate << '\n';
  }
  os << buf.str();
}

//! Histogram density of both estimators for one scenario on [0,1].
inline void
write_mtp_histogram(std::ostream& os, const MtpResult& res, std::size_t scenario, int bins = 50)
{
  std::ostringstream buf;
  buf.precision(17);
  buf << "bin_low,bin_high,bayes,convex\n";
  auto hist = [&](const std::string& method) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    auto v = res.estimates(scenario, method);
    for (double x : v) {
      auto b = std::min(bins - 1, static_cast<int>(std::floor(x * bins)));
      h[static_cast<std::size_t>(std::max(0, b))] += 1.0;
    }
    for (auto& c : h)
      c = v.empty() ? 0.0 : c * bins / static_cast<double>(v.size());
    return h;
  };
  auto hb = hist("bayes"), hc = hist("convex");
  for (int b = 0; b < bins; ++b)
    buf << static_cast<double>(b) / bins << ',' << static_cast<double>(b + 1) / bins << ','
        << hb[static_cast<std::size_t>(b)] << ',' << hc[static_cast<std::size_t>(b)] << '\n';
  os << buf.str();
}

inline void
to_json(nlohmann::json& j, const MtpScenario& s)
{
  j = nlohmann::json{ { "n_tests", s.n_tests }, { "m", s.m },     { "alpha0", s.alpha0 },
                      { "G", s.block_size },    { "rho", s.rho }, { "sidedness", to_string(s.sidedness) },
                      { "a", s.effect_a },      { "b", s.effect_b } };
}

inline void
from_json(const nlohmann::json& j, MtpScenario& s)
{
  s = MtpScenario{};
  s.n_tests = j.value("n_tests", s.n_tests);
  s.m = j.value("m", s.m);
  s.alpha0 = j.value("alpha0", s.alpha0);
  s.block_size = j.value("G", s.block_size);
  s.rho = j.value("rho", s.rho);
  if (j.contains("sidedness"))
    s.sidedness = sidedness_from_string(j.at("sidedness").get<std::string>());
  s.effect_a = j.value("a", s.effect_a);
  s.effect_b = j.value("b", s.effect_b);
}

//! Scenario config: either {"scenarios": [ {...}, ... ]} or
//! {"grid": {"alpha0": [...], "rho": [...], "G": [...], "sidedness": [...]}}
//! with shared keys (n_tests, m, a, b) at the top level.
inline std::vector<MtpScenario>
scenarios_from_json(const nlohmann::json& cfg)
{
  std::vector<MtpScenario> out;
  if (cfg.contains("scenarios")) {
    for (const auto& s : cfg.at("scenarios"))
      out.push_back(s.get<MtpScenario>());
  } else if (cfg.contains("grid")) {
    const auto& g = cfg.at("grid");
    MtpScenario base = cfg.get<MtpScenario>();
    auto list = [&](const char* key, auto fallback) {
      using T = decltype(fallback);
      return g.contains(key) ? g.at(key).get<std::vector<T>>() : std::vector<T>{ fallback };
    };
    auto sides = list("sidedness", to_string(base.sidedness));
    for (double a0 : list("alpha0", base.alpha0))
      for (double rho : list("rho", base.rho))
        for (int G : list("G", base.block_size))
          for (const auto& side : sides) {
            MtpScenario s = base;
            s.alpha0 = a0;
            s.rho = rho;
            s.block_size = G;
            s.sidedness = sidedness_from_string(side);
            out.push_back(s);
          }
  } else {
    throw ParameterError("scenario config needs a 'scenarios' list or a 'grid' object");
  }
  if (out.empty())
    throw ParameterError("scenario config defines no scenarios");
  for (const auto& s : out)
    s.validate();
  return out;
}

} // namespace kmono
