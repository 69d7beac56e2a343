// kmono: command-line driver for k-monotone density estimation.
//
// Exit codes: 0 ok, 1 selftest failure, 2 input error, 3 runtime error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <kmono/baselines.hpp>
#include <kmono/data_io.hpp>
#include <kmono/metrics.hpp>
#include <kmono/mtp.hpp>
#include <kmono/persistence.hpp>
#include <kmono/sampler.hpp>
#include <kmono/simgen.hpp>

#include "selftest.hpp"

using nlohmann::json;
using namespace kmono;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_selftest = 1;
constexpr int exit_input = 2;
constexpr int exit_runtime = 3;

// Input problems detected before any work starts.
struct InputError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

// Reads --config files: {"seed": 1, "fit": {"burn-in": 100, ...}, ...}.
// Nested objects address subcommands; arrays become repeated inputs.
class JsonConfig : public CLI::Config
{
public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& is) const override
  {
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void walk(const json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out)
  {
    for (const auto& [key, v] : j.items()) {
      if (v.is_object()) {
        auto p = parents;
        p.push_back(key);
        walk(v, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (v.is_array())
        for (const auto& e : v)
          item.inputs.push_back(scalar(e));
      else
        item.inputs.push_back(scalar(v));
      out.push_back(std::move(item));
    }
  }
};

struct Global
{
  std::uint64_t seed{ 1 };
  std::string out{ "runs" };
  unsigned threads{ 0 };
};

struct ChainOpts
{
  int burn_in{ 2000 };
  int draws{ 1000 };
  int thin{ 1 };
  int max_sticks{ 0 };
};

void
add_chain_opts(CLI::App* cmd, ChainOpts& c)
{
  cmd->add_option("--burn-in", c.burn_in, "Sweeps discarded before recording")->check(CLI::NonNegativeNumber);
  cmd->add_option("--draws", c.draws, "Posterior draws kept per chain")->check(CLI::PositiveNumber);
  cmd->add_option("--thin", c.thin, "Keep every thin-th sweep")->check(CLI::PositiveNumber);
  cmd->add_option("--max-sticks", c.max_sticks, "Stick truncation cap (0 = max(10 n, 1000))")->check(CLI::NonNegativeNumber);
}

SamplerConfig
sampler_config(const ChainOpts& c, std::uint64_t seed)
{
  SamplerConfig s;
  s.burn_in = c.burn_in;
  s.draws = c.draws;
  s.thin = c.thin;
  s.max_sticks = c.max_sticks;
  s.seed = seed;
  s.validate();
  return s;
}

json
chain_json(const ChainOpts& c)
{
  return { { "burn-in", c.burn_in }, { "draws", c.draws }, { "thin", c.thin }, { "max-sticks", c.max_sticks } };
}

std::string
config_text(const Global& g, const std::string& command, json body)
{
  json j;
  j["seed"] = g.seed;
  j[command] = std::move(body);
  return j.dump(2) + "\n";
}

std::filesystem::path
finish_run(const Global& g,
           const std::string& command,
           const std::string& config,
           const std::map<std::string, std::string>& payloads)
{
  RunManifest m;
  m.command = command;
  m.seed = g.seed;
  auto dir = write_run(g.out, m, config, payloads);
  std::cout << dir.string() << '\n';
  return dir;
}

template<class T>
std::string
csv_of(const T& writer)
{
  std::ostringstream os;
  writer(os);
  return os.str();
}

// ---- fit ----------------------------------------------------------------

struct FitOpts
{
  std::string data;
  int k{ 2 };
  bool adaptive{ false };
  int kmax{ 10 };
  double precision{ 1.0 };
  double base_low{ 0.0 };
  int chains{ 1 };
  std::string truth;
  ChainOpts chain;
};

int
cmd_fit(const Global& g, const FitOpts& o)
{
  std::ifstream is(o.data);
  if (!is)
    throw InputError("cannot open data file " + o.data);
  std::vector<double> x;
  try {
    x = read_unit_column(is);
  } catch (const ParameterError& e) {
    throw InputError(o.data + ": " + e.what());
  }
  if (x.size() < 2)
    throw InputError("need at least two observations");

  PriorConfig prior = o.adaptive ? PriorConfig::adaptive_k(o.kmax) : PriorConfig::fixed(o.k);
  prior.precision_a = o.precision;
  prior.base_low = o.base_low;
  std::optional<DensitySpec> truth;
  try {
    prior.validate(x.size());
    (void)sampler_config(o.chain, 0);
    if (!o.truth.empty())
      truth = density_spec(o.truth);
  } catch (const ParameterError& e) {
    throw InputError(e.what());
  }

  json body{ { "k", o.k },
             { "adaptive", o.adaptive },
             { "kmax", o.kmax },
             { "precision", o.precision },
             { "base-low", o.base_low },
             { "chains", o.chains },
             { "truth", o.truth } };
  body.update(chain_json(o.chain));
  const auto config = config_text(g, "fit", body);

  std::vector<std::vector<PosteriorDraw>> per_chain(static_cast<std::size_t>(o.chains));
  std::vector<std::uint64_t> seeds;
  for (int c = 0; c < o.chains; ++c)
    seeds.push_back(derive_seed(g.seed, { hash_string("fit"), static_cast<std::uint64_t>(c) }));
  std::cerr << "fit: n=" << x.size() << ", " << o.chains << " chain(s)\n";
  parallel_for(per_chain.size(), g.threads, [&](std::size_t c) {
    per_chain[c] = run_chain(x, prior, sampler_config(o.chain, seeds[c]));
  });
  std::vector<PosteriorDraw> draws;
  for (auto& v : per_chain)
    draws.insert(draws.end(), v.begin(), v.end());

  auto grid = posterior_mean_density(draws, GridDensity::canonical_grid());
  std::ostringstream results;
  results.precision(17);
  results << "metric,value\n";
  results << "n," << x.size() << '\n';
  results << "beta0_mean," << posterior_mean_beta0(draws) << '\n';
  std::map<int, int> kcount;
  for (const auto& d : draws)
    ++kcount[d.k];
  int kmode = 0, best = -1;
  for (auto [k, c] : kcount)
    if (c > best) {
      best = c;
      kmode = k;
    }
  results << "k_mode," << kmode << '\n';
  if (truth) {
    results << "mse," << mse_grid(grid, truth->density) << '\n';
    results << "hellinger," << hellinger(posterior_mean_fn(draws), truth->density) << '\n';
  }

  json header{ { "seed", g.seed },
               { "chain_seeds", seeds },
               { "config_hash", sha256_hex(config) },
               { "burn_in", o.chain.burn_in },
               { "draws_per_chain", o.chain.draws },
               { "thin", o.chain.thin },
               { "chains", o.chains },
               { "prior", prior } };

  finish_run(g, "fit", config,
             { { "data.csv", write_unit_column(x) },
               { "draws.jsonl", draws_to_jsonl(draws) },
               { "chain.json", header.dump(2) + "\n" },
               { "density_grid.csv", csv_of([&](std::ostream& os) { write_csv(os, grid); }) },
               { "results.csv", results.str() } });
  return exit_ok;
}

// ---- table1 -------------------------------------------------------------

struct Table1Opts
{
  int R{ 100 };
  std::vector<int> sizes{ 100, 200, 500 };
  std::vector<std::string> densities{ standard_density_ids() };
  std::vector<std::string> methods{ "Bay", "Ada", "Con", "Gre" };
  ChainOpts chain;
};

int
cmd_table1(const Global& g, const Table1Opts& o)
{
  ExperimentPlan plan;
  plan.replications = o.R;
  plan.sizes = o.sizes;
  plan.densities = o.densities;
  plan.seed = g.seed;
  plan.threads = g.threads;
  try {
    auto cfg = sampler_config(o.chain, 0);
    for (const auto& m : o.methods)
      plan.methods.push_back(standard_method(m, cfg));
    for (const auto& d : o.densities)
      (void)density_spec(d);
    plan.validate();
  } catch (const ParameterError& e) {
    throw InputError(e.what());
  }
  json body{ { "R", o.R }, { "n", o.sizes }, { "densities", o.densities }, { "methods", o.methods } };
  body.update(chain_json(o.chain));
  const auto config = config_text(g, "table1", body);

  std::cerr << "table1: " << o.densities.size() * o.sizes.size() * static_cast<std::size_t>(o.R)
            << " replications\n";
  auto table = run_mse_experiment(plan);
  finish_run(g, "table1", config,
             { { "results.csv", csv_of([&](std::ostream& os) { write_mse_csv(os, table); }) },
               { "table1.md", csv_of([&](std::ostream& os) { write_mse_markdown(os, table); }) } });
  return exit_ok;
}

// ---- mtp ----------------------------------------------------------------

struct MtpOpts
{
  std::string scenarios;
  int R{ 50 };
  int kmax{ 10 };
  ChainOpts chain;
};

int
cmd_mtp(const Global& g, const MtpOpts& o)
{
  MtpPlan plan;
  try {
    std::ifstream is(o.scenarios);
    if (!is)
      throw ParameterError("cannot open scenario file " + o.scenarios);
    plan.scenarios = scenarios_from_json(json::parse(is));
    plan.chain = sampler_config(o.chain, 0);
  } catch (const json::exception& e) {
    throw InputError(o.scenarios + ": " + e.what());
  } catch (const ParameterError& e) {
    throw InputError(e.what());
  }
  plan.replications = o.R;
  plan.seed = g.seed;
  plan.threads = g.threads;
  plan.prior = PriorConfig::adaptive_k(o.kmax);

  json body{ { "R", o.R }, { "kmax", o.kmax } };
  body.update(chain_json(o.chain));
  json full = json::parse(config_text(g, "mtp", body));
  full["scenarios"] = plan.scenarios;
  const auto config = full.dump(2) + "\n";

  std::cerr << "mtp: " << plan.scenarios.size() << " scenario(s) x " << o.R << " replications\n";
  auto res = run_mtp_experiment(plan);
  std::map<std::string, std::string> payloads{
    { "estimates.csv", csv_of([&](std::ostream& os) { write_mtp_csv(os, res); }) }
  };
  for (std::size_t s = 0; s < res.scenarios.size(); ++s)
    payloads["hist_" + std::to_string(s) + "_" + res.scenarios[s].label() + ".csv"] =
      csv_of([&](std::ostream& os) { write_mtp_histogram(os, res, s); });
  finish_run(g, "mtp", config, payloads);
  return exit_ok;
}

// ---- contraction --------------------------------------------------------

struct ContractionOpts
{
  std::string density{ "g1" };
  int k{ 2 };
  std::vector<int> sizes{ 100, 200, 400, 800 };
  int reps{ 20 };
  int bootstrap{ 1000 };
  ChainOpts chain;
};

int
cmd_contraction(const Global& g, const ContractionOpts& o)
{
  DensitySpec spec;
  SamplerConfig cfg;
  try {
    spec = density_spec(o.density);
    cfg = sampler_config(o.chain, 0);
    if (o.k < 1 || o.reps < 1 || o.sizes.size() < 2 || o.bootstrap < 10)
      throw ParameterError("contraction needs k >= 1, reps >= 1, two sizes and bootstrap >= 10");
  } catch (const ParameterError& e) {
    throw InputError(e.what());
  }
  json body{ { "density", o.density }, { "k", o.k }, { "sizes", o.sizes }, { "reps", o.reps }, { "bootstrap", o.bootstrap } };
  body.update(chain_json(o.chain));
  const auto config = config_text(g, "contraction", body);

  std::cerr << "contraction: " << o.sizes.size() << " sizes x " << o.reps << " reps\n";
  auto pts = contraction_probe(spec, o.k, o.sizes, o.reps, cfg, g.seed, g.threads);
  auto ci = bootstrap_slope(pts, o.bootstrap, derive_seed(g.seed, { hash_string("bootstrap") }));

  std::ostringstream raw, summary;
  raw.precision(17);
  summary.precision(17);
  raw << "n,rep,hellinger\n";
  summary << "n,median_hellinger\n";
  for (const auto& p : pts) {
    for (std::size_t r = 0; r < p.errors.size(); ++r)
      raw << p.n << ',' << r << ',' << p.errors[r] << '\n';
    summary << p.n << ',' << p.median_error << '\n';
  }
  json slope{ { "slope", ci.slope }, { "lower", ci.lower }, { "upper", ci.upper }, { "level", 0.95 } };
  finish_run(g, "contraction", config,
             { { "contraction.csv", raw.str() },
               { "summary.csv", summary.str() },
               { "slope.json", slope.dump(2) + "\n" } });
  return exit_ok;
}

// ---- selftest -----------------------------------------------------------

int
cmd_selftest(bool list, const std::string& fault)
{
  selftest::Kernel psi = selftest::kernel_reference;
  if (fault == "psi-support")
    psi = selftest::kernel_faulty;
  else if (!fault.empty())
    throw InputError("unknown fault '" + fault + "'");
  auto inv = selftest::invariants(psi);
  if (list) {
    for (const auto& i : inv)
      std::cout << i.name << '\n';
    return exit_ok;
  }
  int failed = 0;
  for (const auto& i : inv) {
    std::string detail;
    try {
      detail = i.check();
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    if (detail.empty()) {
      std::cout << "ok      " << i.name << '\n';
    } else {
      std::cout << "FAILED  " << i.name << ": " << detail << '\n';
      ++failed;
    }
  }
  return failed ? exit_selftest : exit_ok;
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Bayesian and shape-constrained estimation of k-monotone densities on (0,1)" };
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of option values; command-line flags win");

  Global g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Root directory for run outputs");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");

  FitOpts fit;
  auto* fit_cmd = app.add_subcommand("fit", "Run the slice sampler on a data file");
  fit_cmd->add_option("data", fit.data, "CSV with one column of values in (0,1)")->required();
  fit_cmd->add_option("--k", fit.k, "Fixed kernel order")->check(CLI::PositiveNumber);
  fit_cmd->add_flag("--adaptive", fit.adaptive, "Put a uniform prior on k in 1..kmax");
  fit_cmd->add_option("--kmax", fit.kmax, "Largest k in adaptive mode")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--precision", fit.precision, "DP precision");
  fit_cmd->add_option("--base-low", fit.base_low, "Lower end of the base measure (0 = 1/n)");
  fit_cmd->add_option("--chains", fit.chains, "Independent chains")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--truth", fit.truth, "Known density id (g1..g6) for diagnostics");
  add_chain_opts(fit_cmd, fit.chain);

  Table1Opts t1;
  auto* t1_cmd = app.add_subcommand("table1", "Grid-MSE comparison of Bay, Ada, Con and Gre");
  t1_cmd->add_option("--R", t1.R, "Replications per cell")->check(CLI::PositiveNumber);
  t1_cmd->add_option("--n", t1.sizes, "Sample sizes")->delimiter(',');
  t1_cmd->add_option("--densities", t1.densities, "Density ids")->delimiter(',');
  t1_cmd->add_option("--methods", t1.methods, "Methods")->delimiter(',');
  add_chain_opts(t1_cmd, t1.chain);

  MtpOpts mtp;
  auto* mtp_cmd = app.add_subcommand("mtp", "Null-proportion estimation on simulated p-values");
  mtp_cmd->add_option("scenarios", mtp.scenarios, "Scenario JSON file")->required();
  mtp_cmd->add_option("--R", mtp.R, "Replications per scenario")->check(CLI::PositiveNumber);
  mtp_cmd->add_option("--kmax", mtp.kmax, "Largest k of the adaptive prior")->check(CLI::PositiveNumber);
  add_chain_opts(mtp_cmd, mtp.chain);

  ContractionOpts con;
  auto* con_cmd = app.add_subcommand("contraction", "Hellinger error of the posterior mean against n");
  con_cmd->add_option("--density", con.density, "Density id");
  con_cmd->add_option("--k", con.k, "Kernel order of the prior")->check(CLI::PositiveNumber);
  con_cmd->add_option("--sizes", con.sizes, "Sample sizes")->delimiter(',');
  con_cmd->add_option("--reps", con.reps, "Replications per size")->check(CLI::PositiveNumber);
  con_cmd->add_option("--bootstrap", con.bootstrap, "Bootstrap resamples for the slope interval");
  add_chain_opts(con_cmd, con.chain);

  bool list = false;
  std::string fault;
  auto* st_cmd = app.add_subcommand("selftest", "Run the fast invariant suite");
  st_cmd->add_flag("--list", list, "Print invariant names without running them");
  st_cmd->add_option("--inject-fault", fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_input;
  }

  try {
    if (*fit_cmd)
      return cmd_fit(g, fit);
    if (*t1_cmd)
      return cmd_table1(g, t1);
    if (*mtp_cmd)
      return cmd_mtp(g, mtp);
    if (*con_cmd)
      return cmd_contraction(g, con);
    if (*st_cmd)
      return cmd_selftest(list, fault);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_input;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_input;
}
