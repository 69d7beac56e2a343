#pragma once

// Slice Gibbs sampler for
//
//   g(x) = beta0 + (1 - beta0) sum_l w_l psi_k(x, theta_l),
//   w ~ stick-breaking(a), theta_l ~ U(base_low, base_high),
//   beta0 ~ U(0,1), k fixed or uniform on a finite set.
//
// Labels: z_i = 0 is the uniform component, z_i = l >= 1 is stick l.
// Slice levels are deterministic, xi_0 = 1 and xi_l = 0.9^l, so the
// augmented likelihood of observation i is
//
//   1(u_i < xi_{z_i}) * pi_{z_i} / xi_{z_i} * f_{z_i}(x_i)
//
// with pi_0 = beta0 and pi_l = (1 - beta0) w_l.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "kernel.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace kmono {

struct PriorConfig
{
  double precision_a{ 1.0 };
  //! Base measure support; base_low <= 0 means "1/n" for the data at hand.
  double base_low{ 0.0 };
  double base_high{ 1.0 };
  bool adaptive{ false };
  int fixed_k{ 2 };
  std::vector<int> k_set{ 1, 2, 3, 4, 5, 6, 7, 8, 9, 10 };

  static PriorConfig fixed(int k)
  {
    PriorConfig p;
    p.fixed_k = k;
    return p;
  }

  static PriorConfig adaptive_k(int kmax = 10)
  {
    PriorConfig p;
    p.adaptive = true;
    p.k_set.clear();
    for (int k = 1; k <= kmax; ++k)
      p.k_set.push_back(k);
    return p;
  }

  double low_for(std::size_t n) const { return base_low > 0.0 ? base_low : 1.0 / static_cast<double>(n); }

  void validate(std::size_t n) const
  {
    if (!(precision_a > 0.0))
      throw ParameterError("DP precision must be positive");
    double lo = low_for(n);
    if (!(lo > 0.0 && lo < base_high && base_high <= 1.0))
      throw ParameterError("base measure needs 0 < low < high <= 1");
    if (adaptive) {
      if (k_set.empty())
        throw ParameterError("adaptive k needs a nonempty k_set");
      for (int k : k_set)
        if (k < 1)
          throw ParameterError("k_set entries must be >= 1");
    } else if (fixed_k < 1) {
      throw ParameterError("fixed k must be >= 1");
    }
  }
};

struct SamplerConfig
{
  int burn_in{ 2000 };
  int draws{ 1000 };
  int thin{ 1 };
  std::uint64_t seed{ 1 };
  //! 0 means max(10 n, 1000). Small samples need the floor: one tiny slice
  //! variable already asks for dozens of sticks.
  int max_sticks{ 0 };

  void validate() const
  {
    if (burn_in < 0 || draws < 1 || thin < 1 || max_sticks < 0)
      throw ParameterError("sampler config needs burn_in >= 0, draws >= 1, thin >= 1");
  }
};

struct PosteriorDraw
{
  int k{ 1 };
  double beta0{ 1.0 };
  std::vector<Atom> atoms;

  KMixture mixture() const { return KMixture::normalized(k, beta0, atoms); }

  bool operator==(const PosteriorDraw&) const = default;
};

struct SamplerState
{
  static constexpr double slice_ratio = 0.9;

  std::vector<double> data; // sorted
  std::vector<int> z;
  std::vector<double> u;
  std::vector<double> sticks; // V_l, l = 1..L stored at l-1
  std::vector<double> atoms;  // theta_l
  double beta0{ 0.5 };
  int k{ 1 };
  double low{ 0.0 }, high{ 1.0 };
  Engine rng;

  static double xi(int l) { return std::pow(slice_ratio, l); }

  std::vector<double> weights() const
  {
    std::vector<double> w(sticks.size());
    double rest = 1.0;
    for (std::size_t l = 0; l < sticks.size(); ++l) {
      w[l] = sticks[l] * rest;
      rest *= 1.0 - sticks[l];
    }
    return w;
  }

  int occupied_max() const { return z.empty() ? 0 : *std::max_element(z.begin(), z.end()); }

  std::string describe() const
  {
    std::ostringstream os;
    os << "state{n=" << data.size() << ", k=" << k << ", beta0=" << beta0
       << ", sticks=" << sticks.size() << ", max label=" << occupied_max() << "}";
    return os.str();
  }
};

namespace detail {

inline double
logit(double s)
{
  return std::log(s) - std::log1p(-s);
}

inline double
expit(double e)
{
  return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
}

// Largest l with xi_l > u.
inline int
slice_reach(double u)
{
  int l = static_cast<int>(std::floor(std::log(u) / std::log(SamplerState::slice_ratio)));
  while (l > 0 && SamplerState::xi(l) <= u)
    --l;
  while (SamplerState::xi(l + 1) > u)
    ++l;
  return l;
}

} // namespace detail

inline SamplerState
init_state(std::span<const double> data, const PriorConfig& prior, std::uint64_t seed)
{
  if (data.size() < 2)
    throw ParameterError("sampler needs at least two observations");
  SamplerState s;
  s.rng.seed(seed);
  s.data.assign(data.begin(), data.end());
  bool nudged = false;
  for (auto& x : s.data) {
    if (!std::isfinite(x) || x < 0.0 || x > 1.0)
      throw ParameterError("sampler data must lie in (0,1)");
    if (x <= 0.0) {
      x = 1e-12;
      nudged = true;
    } else if (x >= 1.0) {
      x = 1.0 - 1e-12;
      nudged = true;
    }
  }
  if (nudged)
    std::cerr << "warning: boundary observations moved 1e-12 inside (0,1)\n";
  std::sort(s.data.begin(), s.data.end());
  prior.validate(s.data.size());
  s.low = prior.low_for(s.data.size());
  s.high = prior.base_high;

  if (prior.adaptive) {
    std::uniform_int_distribution<std::size_t> pick(0, prior.k_set.size() - 1);
    s.k = prior.k_set[pick(s.rng)];
  } else {
    s.k = prior.fixed_k;
  }
  s.beta0 = 0.5;
  s.sticks = { 0.5 };
  s.atoms = { s.high };
  s.z.assign(s.data.size(), 0);
  for (auto& zi : s.z)
    zi = uniform_open(s.rng) < 0.5 ? 0 : 1;
  s.u.assign(s.data.size(), 0.5);
  return s;
}

//! u_i ~ U(0, xi_{z_i}).
inline void
update_slices(SamplerState& s)
{
  for (std::size_t i = 0; i < s.data.size(); ++i)
    s.u[i] = uniform_open(s.rng) * (s.z[i] == 0 ? 1.0 : SamplerState::xi(s.z[i]));
}

//! Instantiates sticks/atoms from the prior until every slice is covered.
inline void
extend_sticks(SamplerState& s, const PriorConfig& prior, int max_sticks)
{
  double umin = *std::min_element(s.u.begin(), s.u.end());
  auto need = static_cast<std::size_t>(std::max(1, detail::slice_reach(umin)));
  if (need > static_cast<std::size_t>(max_sticks))
    throw ResourceError("stick truncation " + std::to_string(need) + " exceeds max_sticks " +
                        std::to_string(max_sticks));
  while (s.sticks.size() < need) {
    s.sticks.push_back(beta_draw(s.rng, 1.0, prior.precision_a));
    s.atoms.push_back(s.low + (s.high - s.low) * uniform_open(s.rng));
  }
}

//! z_i | u_i, weights, atoms, beta0, k. Requires extend_sticks first.
inline void
update_allocations(SamplerState& s)
{
  const auto w = s.weights();
  const auto L = s.sticks.size();
  std::vector<double> coef(L);
  for (std::size_t l = 0; l < L; ++l)
    coef[l] = (1.0 - s.beta0) * w[l] / SamplerState::xi(static_cast<int>(l) + 1) * s.k / s.atoms[l];
  std::vector<double> mass(L + 1);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const double x = s.data[i];
    const auto reach = std::min<std::size_t>(L, static_cast<std::size_t>(detail::slice_reach(s.u[i])));
    double total = s.beta0;
    mass[0] = total;
    for (std::size_t l = 0; l < reach; ++l) {
      if (x < s.atoms[l])
        total += coef[l] * detail::ipow(1.0 - x / s.atoms[l], s.k - 1);
      mass[l + 1] = total;
    }
    if (!std::isfinite(total) || !(total > 0.0))
      throw NumericError("non-finite allocation mass at x=" + std::to_string(x) + " in " + s.describe());
    double r = uniform_open(s.rng) * total;
    std::size_t j = 0;
    while (j < reach && mass[j] <= r)
      ++j;
    s.z[i] = static_cast<int>(j);
  }
}

//! V_l ~ Beta(1 + n_l, a + sum_{m > l} n_m) over the instantiated sticks.
inline void
update_sticks(SamplerState& s, const PriorConfig& prior)
{
  const auto L = s.sticks.size();
  std::vector<std::size_t> count(L + 1, 0);
  for (int zi : s.z)
    if (zi > 0)
      ++count[static_cast<std::size_t>(zi)];
  std::size_t tail = 0;
  for (std::size_t l = L; l >= 1; --l) {
    s.sticks[l - 1] = beta_draw(s.rng, 1.0 + static_cast<double>(count[l]),
                                prior.precision_a + static_cast<double>(tail));
    tail += count[l];
  }
}

//! Log target of one atom on the logit scale: sum_i log psi_k(x_i, theta)
//! plus the log Jacobian of theta = low + (high - low) expit(eta).
inline double
atom_log_target(double theta, std::span<const double> members, int k, double low, double high)
{
  if (!(theta > low && theta < high))
    return -std::numeric_limits<double>::infinity();
  double lt = 0.0;
  for (double x : members) {
    if (x >= theta)
      return -std::numeric_limits<double>::infinity();
    lt += std::log(static_cast<double>(k)) - std::log(theta) + (k - 1) * std::log1p(-x / theta);
  }
  double sc = (theta - low) / (high - low);
  return lt + std::log(sc) + std::log1p(-sc);
}

//! Log Metropolis-Hastings ratio for moving an atom from theta to proposal.
//! The random walk is symmetric on the logit scale.
inline double
atom_log_ratio(double theta, double proposal, std::span<const double> members, int k, double low, double high)
{
  return atom_log_target(proposal, members, k, low, high) - atom_log_target(theta, members, k, low, high);
}

constexpr double atom_step = 0.5;

//! Random-walk MH on each occupied atom; unoccupied atoms redrawn from base.
inline void
update_atoms(SamplerState& s, const PriorConfig& /*prior*/)
{
  const auto L = s.atoms.size();
  std::vector<std::vector<double>> members(L);
  for (std::size_t i = 0; i < s.data.size(); ++i)
    if (s.z[i] > 0)
      members[static_cast<std::size_t>(s.z[i] - 1)].push_back(s.data[i]);
  for (std::size_t l = 0; l < L; ++l) {
    if (members[l].empty()) {
      s.atoms[l] = s.low + (s.high - s.low) * uniform_open(s.rng);
      continue;
    }
    double theta = s.atoms[l];
    double eta = detail::logit((theta - s.low) / (s.high - s.low));
    double prop = s.low + (s.high - s.low) * detail::expit(eta + atom_step * std_normal(s.rng));
    double lr = atom_log_ratio(theta, prop, members[l], s.k, s.low, s.high);
    if (std::log(uniform_open(s.rng)) < lr)
      s.atoms[l] = prop;
  }
}

//! beta0 ~ Beta(1 + #{z = 0}, 1 + #{z > 0}).
inline void
update_beta0(SamplerState& s)
{
  auto n0 = static_cast<double>(std::count(s.z.begin(), s.z.end(), 0));
  auto n = static_cast<double>(s.z.size());
  s.beta0 = beta_draw(s.rng, 1.0 + n0, 1.0 + n - n0);
}

//! Log full conditional of each k in k_set given slices, sticks, atoms and
//! beta0, with the labels summed out.
inline std::vector<double>
k_log_conditional(const SamplerState& s, const std::vector<int>& k_set)
{
  const int kmax = *std::max_element(k_set.begin(), k_set.end());
  const auto w = s.weights();
  const auto L = s.sticks.size();
  std::vector<double> coef(L);
  for (std::size_t l = 0; l < L; ++l)
    coef[l] = (1.0 - s.beta0) * w[l] / SamplerState::xi(static_cast<int>(l) + 1) / s.atoms[l];
  std::vector<double> ll(static_cast<std::size_t>(kmax) + 1, 0.0);
  std::vector<double> acc(static_cast<std::size_t>(kmax) + 1);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const double x = s.data[i];
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto reach = std::min<std::size_t>(L, static_cast<std::size_t>(detail::slice_reach(s.u[i])));
    for (std::size_t l = 0; l < reach; ++l) {
      if (x >= s.atoms[l])
        continue;
      double t = 1.0 - x / s.atoms[l];
      double pw = coef[l];
      for (int kk = 1; kk <= kmax; ++kk) {
        acc[static_cast<std::size_t>(kk)] += kk * pw;
        pw *= t;
      }
    }
    for (int kk : k_set)
      ll[static_cast<std::size_t>(kk)] += std::log(s.beta0 + acc[static_cast<std::size_t>(kk)]);
  }
  std::vector<double> out;
  out.reserve(k_set.size());
  for (int kk : k_set)
    out.push_back(ll[static_cast<std::size_t>(kk)]);
  return out;
}

//! Draws k from its full conditional (uniform prior over k_set), then
//! refreshes the labels under the new k.
inline void
update_k(SamplerState& s, const PriorConfig& prior)
{
  if (!prior.adaptive || prior.k_set.size() == 1) {
    if (prior.adaptive)
      s.k = prior.k_set.front();
    return;
  }
  auto ll = k_log_conditional(s, prior.k_set);
  double mx = *std::max_element(ll.begin(), ll.end());
  if (!std::isfinite(mx))
    throw NumericError("all k candidates have non-finite likelihood in " + s.describe());
  std::vector<double> p(ll.size());
  double tot = 0.0;
  for (std::size_t j = 0; j < ll.size(); ++j)
    tot += p[j] = std::exp(ll[j] - mx);
  double r = uniform_open(s.rng) * tot;
  std::size_t j = 0;
  for (double acc = p[0]; j + 1 < p.size() && acc <= r; acc += p[++j]) {
  }
  int knew = prior.k_set[j];
  if (knew != s.k) {
    s.k = knew;
    update_allocations(s);
  }
}

//! Drops sticks beyond the largest occupied label.
inline void
truncate_sticks(SamplerState& s)
{
  auto L = static_cast<std::size_t>(s.occupied_max());
  s.sticks.resize(L);
  s.atoms.resize(L);
}

//! Occupied atoms with weights renormalized among them, labels ordered by
//! theta. Falls back to the first instantiated atom when nothing is occupied.
inline PosteriorDraw
record_draw(const SamplerState& s)
{
  const auto w = s.weights();
  std::vector<bool> occ(s.sticks.size(), false);
  for (int zi : s.z)
    if (zi > 0)
      occ[static_cast<std::size_t>(zi - 1)] = true;
  PosteriorDraw d;
  d.k = s.k;
  d.beta0 = s.beta0;
  double tot = 0.0;
  for (std::size_t l = 0; l < occ.size(); ++l)
    if (occ[l]) {
      d.atoms.push_back({ s.atoms[l], w[l] });
      tot += w[l];
    }
  if (d.atoms.empty() || !(tot > 0.0)) {
    d.atoms = { { s.atoms.empty() ? s.high : s.atoms.front(), 1.0 } };
    tot = 1.0;
  }
  for (auto& a : d.atoms)
    a.weight /= tot;
  std::sort(d.atoms.begin(), d.atoms.end(), [](const Atom& a, const Atom& b) { return a.theta < b.theta; });
  // canonical form (merged duplicates)
  auto m = KMixture::normalized(d.k, d.beta0, d.atoms);
  d.atoms = m.atoms();
  return d;
}

//! One full sweep; returns the draw taken before truncation when asked.
inline void
sweep(SamplerState& s, const PriorConfig& prior, int max_sticks, PosteriorDraw* out = nullptr)
{
  update_slices(s);
  extend_sticks(s, prior, max_sticks);
  update_allocations(s);
  update_sticks(s, prior);
  update_atoms(s, prior);
  update_beta0(s);
  update_k(s, prior);
  if (out)
    *out = record_draw(s);
  truncate_sticks(s);
}

//! Runs one chain: burn_in sweeps, then draws * thin sweeps keeping every
//! thin-th. Output depends only on (data, prior, cfg).
inline std::vector<PosteriorDraw>
run_chain(std::span<const double> data, const PriorConfig& prior, const SamplerConfig& cfg)
{
  cfg.validate();
  SamplerState s = init_state(data, prior, cfg.seed);
  const int max_sticks = cfg.max_sticks > 0 ? cfg.max_sticks : std::max(1000, static_cast<int>(10 * s.data.size()));
  for (int it = 0; it < cfg.burn_in; ++it)
    sweep(s, prior, max_sticks);
  std::vector<PosteriorDraw> draws;
  draws.reserve(static_cast<std::size_t>(cfg.draws));
  for (int d = 0; d < cfg.draws; ++d) {
    for (int t = 1; t < cfg.thin; ++t)
      sweep(s, prior, max_sticks);
    PosteriorDraw pd;
    sweep(s, prior, max_sticks, &pd);
    draws.push_back(std::move(pd));
  }
  return draws;
}

//! Pointwise average of the draw densities.
inline DensityFn
posterior_mean_fn(std::vector<PosteriorDraw> draws)
{
  if (draws.empty())
    throw ParameterError("posterior mean needs at least one draw");
  auto shared = std::make_shared<const std::vector<PosteriorDraw>>(std::move(draws));
  return { [shared](double x) {
            double s = 0.0;
            for (const auto& d : *shared) {
              double m = 0.0;
              for (const auto& a : d.atoms)
                m += a.weight * detail::psi_unchecked(d.k, a.theta, x);
              s += d.beta0 + (1.0 - d.beta0) * m;
            }
            return s / static_cast<double>(shared->size());
          },
           {} };
}

inline GridDensity
posterior_mean_density(const std::vector<PosteriorDraw>& draws, std::vector<double> grid)
{
  return GridDensity::tabulate(posterior_mean_fn(draws), std::move(grid));
}

inline double
posterior_mean_beta0(const std::vector<PosteriorDraw>& draws)
{
  if (draws.empty())
    throw ParameterError("posterior mean needs at least one draw");
  double s = 0.0;
  for (const auto& d : draws)
    s += d.beta0;
  return s / static_cast<double>(draws.size());
}

inline void
to_json(nlohmann::json& j, const PosteriorDraw& d)
{
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : d.atoms)
    atoms.push_back({ a.theta, a.weight });
  j = nlohmann::json{ { "k", d.k }, { "beta0", d.beta0 }, { "atoms", atoms } };
}

inline void
from_json(const nlohmann::json& j, PosteriorDraw& d)
{
  d.k = j.at("k").get<int>();
  d.beta0 = j.at("beta0").get<double>();
  d.atoms.clear();
  for (const auto& a : j.at("atoms"))
    d.atoms.push_back({ a.at(0).get<double>(), a.at(1).get<double>() });
}

//! One JSON object per line.
inline std::string
draws_to_jsonl(const std::vector<PosteriorDraw>& draws)
{
  std::string out;
  for (const auto& d : draws) {
    out += nlohmann::json(d).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<PosteriorDraw>
draws_from_jsonl(const std::string& text)
{
  std::vector<PosteriorDraw> draws;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty())
      draws.push_back(nlohmann::json::parse(line).get<PosteriorDraw>());
  return draws;
}

inline void
to_json(nlohmann::json& j, const PriorConfig& p)
{
  j = nlohmann::json{ { "precision_a", p.precision_a }, { "base_low", p.base_low },
                      { "base_high", p.base_high },     { "adaptive", p.adaptive },
                      { "fixed_k", p.fixed_k },         { "k_set", p.k_set } };
}

inline void
from_json(const nlohmann::json& j, PriorConfig& p)
{
  p = PriorConfig{};
  p.precision_a = j.value("precision_a", p.precision_a);
  p.base_low = j.value("base_low", p.base_low);
  p.base_high = j.value("base_high", p.base_high);
  p.adaptive = j.value("adaptive", p.adaptive);
  p.fixed_k = j.value("fixed_k", p.fixed_k);
  p.k_set = j.value("k_set", p.k_set);
}

inline void
to_json(nlohmann::json& j, const SamplerConfig& c)
{
  j = nlohmann::json{ { "burn_in", c.burn_in }, { "draws", c.draws }, { "thin", c.thin },
                      { "seed", c.seed },       { "max_sticks", c.max_sticks } };
}

inline void
from_json(const nlohmann::json& j, SamplerConfig& c)
{
  c = SamplerConfig{};
  c.burn_in = j.value("burn_in", c.burn_in);
  c.draws = j.value("draws", c.draws);
  c.thin = j.value("thin", c.thin);
  c.seed = j.value("seed", c.seed);
  c.max_sticks = j.value("max_sticks", c.max_sticks);
}

} // namespace kmono
