#pragma once

// Synthetic k-monotone test densities, the grid-MSE replication harness and
// the Hellinger shrinkage probe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "sampler.hpp"

namespace kmono {

struct DensitySpec
{
  std::string id;
  //! Kernel order used by the known-k Bayesian estimator.
  int k{ 2 };
  DensityFn density;
  std::function<double(double)> cdf;
  std::function<double(Engine&)> draw;

  static DensitySpec custom(std::string id, const KMixture& m)
  {
    DensitySpec s;
    s.id = std::move(id);
    s.k = m.k();
    s.density = DensityFn::from(m);
    s.cdf = [m](double x) { return m.cdf(x); };
    s.draw = [m](Engine& rng) {
      double uc = uniform_open(rng);
      return m.sample(uc, uniform_open(rng));
    };
    return s;
  }
};

namespace detail {

inline KMixture
thirds(int k, double beta0)
{
  return KMixture(k, beta0, { { 1.0 / 3, 1.0 / 3 }, { 2.0 / 3, 1.0 / 3 }, { 1.0, 1.0 / 3 } });
}

// int_x^1 psi_4(x, t) 2t dt
inline double
g6_pdf(double x)
{
  if (x >= 1.0)
    return 0.0;
  x = std::max(x, 0.0);
  double xlx = x > 0.0 ? x * std::log(x) : 0.0;
  return std::max(0.0, 8.0 * (1.0 + 1.5 * x + 3.0 * xlx - 3.0 * x * x + 0.5 * x * x * x));
}

inline double
g6_cdf(double x)
{
  if (x <= 0.0)
    return 0.0;
  if (x >= 1.0)
    return 1.0;
  double x2 = x * x;
  return 8.0 * (x + 1.5 * x2 * std::log(x) - x2 * x + x2 * x2 / 8.0);
}

} // namespace detail

inline const std::vector<std::string>&
standard_density_ids()
{
  static const std::vector<std::string> ids{ "g1", "g2", "g3", "g4", "g5", "g6" };
  return ids;
}

//! The six benchmark densities. g6 mixes psi_4 over theta ~ Beta(2,1).
inline DensitySpec
density_spec(const std::string& id)
{
  if (id == "g1")
    return DensitySpec::custom(id, KMixture(2, 0.0, { { 1.0, 1.0 } }));
  if (id == "g2")
    return DensitySpec::custom(id, KMixture(2, 0.5, { { 1.0, 1.0 } }));
  if (id == "g3")
    return DensitySpec::custom(id, detail::thirds(2, 0.0));
  if (id == "g4")
    return DensitySpec::custom(id, detail::thirds(2, 0.5));
  if (id == "g5")
    return DensitySpec::custom(id, detail::thirds(4, 0.0));
  if (id == "g6") {
    DensitySpec s;
    s.id = id;
    s.k = 4;
    s.density = { detail::g6_pdf, {} };
    s.cdf = detail::g6_cdf;
    s.draw = [](Engine& rng) {
      double theta = std::sqrt(uniform_open(rng));
      return psi_sample({ 4, theta }, uniform_open(rng));
    };
    return s;
  }
  throw ParameterError("unknown density id '" + id + "' (expected g1..g6)");
}

//! n iid draws; identical for identical seeds.
inline std::vector<double>
sample_density(const DensitySpec& spec, std::size_t n, std::uint64_t seed)
{
  Engine rng(seed);
  std::vector<double> x(n);
  for (auto& v : x)
    v = spec.draw(rng);
  return x;
}

//! Estimator values on the canonical K = 100 grid.
using GridEstimator =
  std::function<std::vector<double>(std::span<const double> data, const DensitySpec& truth, std::uint64_t seed)>;

struct Method
{
  std::string name;
  GridEstimator estimate;
};

inline std::vector<double>
eval_on_grid(const std::function<double(double)>& f)
{
  auto grid = GridDensity::canonical_grid();
  std::vector<double> v;
  v.reserve(grid.size());
  for (double x : grid)
    v.push_back(f(x));
  return v;
}

//! Bay (known k), Ada (k uniform on 1..10), Con and Gre.
inline Method
standard_method(const std::string& name, const SamplerConfig& chain)
{
  if (name == "Bay" || name == "Ada") {
    bool adaptive = name == "Ada";
    return { name, [adaptive, chain](std::span<const double> data, const DensitySpec& truth, std::uint64_t seed) {
              PriorConfig prior = adaptive ? PriorConfig::adaptive_k() : PriorConfig::fixed(truth.k);
              SamplerConfig cfg = chain;
              cfg.seed = seed;
              auto draws = run_chain(data, prior, cfg);
              return posterior_mean_density(draws, GridDensity::canonical_grid()).values;
            } };
  }
  if (name == "Con")
    return { name, [](std::span<const double> data, const DensitySpec&, std::uint64_t) {
              auto fit = convex_npmle(data);
              return eval_on_grid([&](double x) { return fit.pdf(x); });
            } };
  if (name == "Gre")
    return { name, [](std::span<const double> data, const DensitySpec&, std::uint64_t) {
              auto fit = grenander(data);
              return eval_on_grid([&](double x) { return fit.pdf(x); });
            } };
  throw ParameterError("unknown method '" + name + "' (expected Bay, Ada, Con or Gre)");
}

struct ExperimentPlan
{
  std::vector<std::string> densities{ standard_density_ids() };
  std::vector<int> sizes{ 100, 200, 500 };
  int replications{ 100 };
  std::vector<Method> methods;
  std::uint64_t seed{ 1 };
  unsigned threads{ 0 };
  //! Largest tolerated failure fraction per cell.
  double max_failure_rate{ 0.05 };

  void validate() const
  {
    if (replications < 1)
      throw ParameterError("replications must be >= 1");
    if (densities.empty() || sizes.empty() || methods.empty())
      throw ParameterError("experiment plan needs densities, sizes and methods");
    for (int n : sizes)
      if (n < 2)
        throw ParameterError("sample sizes must be >= 2");
  }
};

struct MseCell
{
  std::string method;
  int n{ 0 };
  std::string density;
  double mean_mse{ 0.0 };
  double se_mse{ 0.0 };
  int replications{ 0 };
  int failures{ 0 };
};

struct MseTable
{
  std::vector<MseCell> cells;

  const MseCell& at(const std::string& method, int n, const std::string& density) const
  {
    for (const auto& c : cells)
      if (c.method == method && c.n == n && c.density == density)
        return c;
    throw ParameterError("no cell " + method + "/" + std::to_string(n) + "/" + density);
  }
};

//! Data seed of one replication; shared by all methods so they see the same sample.
inline std::uint64_t
replication_seed(std::uint64_t master, const std::string& density, int n, int rep)
{
  return derive_seed(master, { hash_string(density), static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep) });
}

//! Mean grid MSE per (method, n, density). Failed replications are dropped
//! and counted; a cell losing more than max_failure_rate throws.
inline MseTable
run_mse_experiment(const ExperimentPlan& plan)
{
  plan.validate();
  struct Task
  {
    std::size_t d, s;
    int rep;
  };
  std::vector<Task> tasks;
  for (std::size_t d = 0; d < plan.densities.size(); ++d)
    for (std::size_t s = 0; s < plan.sizes.size(); ++s)
      for (int r = 0; r < plan.replications; ++r)
        tasks.push_back({ d, s, r });

  std::vector<DensitySpec> specs;
  for (const auto& id : plan.densities)
    specs.push_back(density_spec(id));

  const auto M = plan.methods.size();
  constexpr double failed = -1.0;
  std::vector<double> mse(tasks.size() * M, failed);
  parallel_for(tasks.size(), plan.threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    const auto& spec = specs[task.d];
    const int n = plan.sizes[task.s];
    const auto seed = replication_seed(plan.seed, spec.id, n, task.rep);
    auto data = sample_density(spec, static_cast<std::size_t>(n), seed);
    GridDensity est;
    est.grid = GridDensity::canonical_grid();
    for (std::size_t m = 0; m < M; ++m) {
      try {
        est.values = plan.methods[m].estimate(data, spec, derive_seed(seed, { hash_string(plan.methods[m].name) }));
        mse[t * M + m] = mse_grid(est, spec.density);
      } catch (const Error& e) {
        std::cerr << "warning: " << plan.methods[m].name << " failed on " << spec.id << " n=" << n
                  << " rep=" << task.rep << ": " << e.what() << '\n';
      }
    }
  });

  MseTable table;
  for (const auto& method : plan.methods)
    for (int n : plan.sizes)
      for (const auto& id : plan.densities)
        table.cells.push_back({ method.name, n, id, 0.0, 0.0, 0, 0 });
  auto cell_index = [&](std::size_t m, std::size_t s, std::size_t d) {
    return (m * plan.sizes.size() + s) * plan.densities.size() + d;
  };
  std::vector<std::vector<double>> values(table.cells.size());
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (std::size_t m = 0; m < M; ++m) {
      auto c = cell_index(m, tasks[t].s, tasks[t].d);
      double v = mse[t * M + m];
      if (v == failed)
        ++table.cells[c].failures;
      else
        values[c].push_back(v);
    }
  for (std::size_t c = 0; c < table.cells.size(); ++c) {
    auto& cell = table.cells[c];
    const auto& v = values[c];
    cell.replications = plan.replications;
    if (static_cast<double>(cell.failures) > plan.max_failure_rate * plan.replications)
      throw NumericError(cell.method + "/" + std::to_string(cell.n) + "/" + cell.density + ": " +
                         std::to_string(cell.failures) + " of " + std::to_string(plan.replications) +
                         " replications failed");
    if (v.empty())
      continue;
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v)
      ss += (x - mean) * (x - mean);
    cell.mean_mse = mean;
    cell.se_mse = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
  }
  return table;
}

inline void
write_mse_csv(std::ostream& os, const MseTable& table)
{
  std::ostringstream buf;
  buf.precision(17);
  buf << "method,n,density,mean_mse,se_mse,R,failures\n";
  for (const auto& c : table.cells)
    buf << c.method << ',' << c.n << ',' << c.density << ',' << c.mean_mse << ',' << c.se_mse << ','
        << c.replications << ',' << c.failures << '\n';
  os << buf.str();
}

//! Rows grouped by n then method, one column per density, three decimals.
inline void
write_mse_markdown(std::ostream& os, const MseTable& table)
{
  std::vector<int> sizes;
  std::vector<std::string> methods, densities;
  auto add = [](auto& v, const auto& x) {
    if (std::find(v.begin(), v.end(), x) == v.end())
      v.push_back(x);
  };
  for (const auto& c : table.cells) {
    add(sizes, c.n);
    add(methods, c.method);
    add(densities, c.density);
  }
  std::ostringstream buf;
  buf << "| n | method |";
  for (const auto& d : densities)
    buf << ' ' << d << " |";
  buf << "\n|---|---|";
  for (std::size_t i = 0; i < densities.size(); ++i)
    buf << "---|";
  buf << '\n';
  buf << std::fixed << std::setprecision(3);
  for (int n : sizes)
    for (const auto& m : methods) {
      buf << "| " << n << " | " << m << " |";
      for (const auto& d : densities)
        buf << ' ' << table.at(m, n, d).mean_mse << " |";
      buf << '\n';
    }
  os << buf.str();
}

struct ContractionPoint
{
  int n{ 0 };
  double median_error{ 0.0 };
  std::vector<double> errors;
};

inline double
median(std::vector<double> v)
{
  if (v.empty())
    throw ParameterError("median of an empty set");
  std::sort(v.begin(), v.end());
  auto h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

//! Median Hellinger distance between the posterior mean density and the
//! truth, per sample size.
inline std::vector<ContractionPoint>
contraction_probe(const DensitySpec& truth,
                  int k,
                  const std::vector<int>& sizes,
                  int reps,
                  const SamplerConfig& chain,
                  std::uint64_t seed,
                  unsigned threads = 0)
{
  if (reps < 1 || sizes.empty())
    throw ParameterError("contraction probe needs reps >= 1 and at least one size");
  std::vector<double> err(sizes.size() * static_cast<std::size_t>(reps));
  parallel_for(err.size(), threads, [&](std::size_t t) {
    const int n = sizes[t / static_cast<std::size_t>(reps)];
    const int rep = static_cast<int>(t % static_cast<std::size_t>(reps));
    auto dseed = replication_seed(seed, truth.id, n, rep);
    auto data = sample_density(truth, static_cast<std::size_t>(n), dseed);
    SamplerConfig cfg = chain;
    cfg.seed = derive_seed(dseed, { hash_string("chain") });
    auto draws = run_chain(data, PriorConfig::fixed(k), cfg);
    err[t] = hellinger(posterior_mean_fn(std::move(draws)), truth.density);
  });
  std::vector<ContractionPoint> out;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    ContractionPoint p;
    p.n = sizes[s];
    p.errors.assign(err.begin() + static_cast<std::ptrdiff_t>(s * reps),
                    err.begin() + static_cast<std::ptrdiff_t>((s + 1) * reps));
    p.median_error = median(p.errors);
    out.push_back(std::move(p));
  }
  return out;
}

//! Least-squares slope of y on x.
inline double
ols_slope(const std::vector<double>& x, const std::vector<double>& y)
{
  const auto n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0))
    throw ParameterError("slope needs at least two distinct x values");
  return sxy / sxx;
}

struct SlopeInterval
{
  double slope{ 0.0 };
  double lower{ 0.0 };
  double upper{ 0.0 };
};

//! Slope of log median error on log n with a percentile bootstrap interval;
//! replications are resampled within each n.
inline SlopeInterval
bootstrap_slope(const std::vector<ContractionPoint>& points, int resamples, std::uint64_t seed, double level = 0.95)
{
  if (points.size() < 2 || resamples < 10)
    throw ParameterError("bootstrap needs two sizes and at least 10 resamples");
  std::vector<double> lx, ly;
  for (const auto& p : points) {
    lx.push_back(std::log(static_cast<double>(p.n)));
    ly.push_back(std::log(p.median_error));
  }
  SlopeInterval out;
  out.slope = ols_slope(lx, ly);
  Engine rng(seed);
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    for (std::size_t s = 0; s < points.size(); ++s) {
      const auto& e = points[s].errors;
      std::uniform_int_distribution<std::size_t> pick(0, e.size() - 1);
      std::vector<double> rs(e.size());
      for (auto& v : rs)
        v = e[pick(rng)];
      ly[s] = std::log(median(std::move(rs)));
    }
    slopes.push_back(ols_slope(lx, ly));
  }
  std::sort(slopes.begin(), slopes.end());
  auto q = [&](double p) {
    auto i = static_cast<std::size_t>(std::clamp(p * (resamples - 1), 0.0, resamples - 1.0));
    return slopes[i];
  };
  out.lower = q((1.0 - level) / 2.0);
  out.upper = q(1.0 - (1.0 - level) / 2.0);
  return out;
}

} // namespace kmono
