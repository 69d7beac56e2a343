#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <kmono/checks.hpp>
#include <kmono/mtp.hpp>

using namespace kmono;

namespace {

MtpScenario
scenario(double alpha0, double rho, Sidedness side = Sidedness::two_sided)
{
  MtpScenario s;
  s.alpha0 = alpha0;
  s.rho = rho;
  s.sidedness = side;
  return s;
}

auto uniform_cdf = [](double t) { return std::clamp(t, 0.0, 1.0); };

} // namespace

TEST(Pvalues, UniformUnderIndependentNulls)
{
  for (auto side : { Sidedness::one_sided, Sidedness::two_sided }) {
    auto pv = simulate_pvalues(scenario(1.0, 0.0, side), 5);
    EXPECT_TRUE(std::all_of(pv.truth_mask.begin(), pv.truth_mask.end(), [](bool b) { return b; }));
    EXPECT_TRUE(checks::ks_accepts(pv.values, uniform_cdf, 0.01)) << checks::ks_statistic(pv.values, uniform_cdf);
  }
}

TEST(Pvalues, UniformUnderCorrelatedNulls)
{
  // one test per block across many runs gives independent draws
  std::vector<double> picked;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto pv = simulate_pvalues(scenario(1.0, 0.75), seed);
    for (std::size_t i = 0; i < pv.values.size(); i += 50)
      picked.push_back(pv.values[i]);
  }
  EXPECT_TRUE(checks::ks_accepts(picked, uniform_cdf, 0.01)) << checks::ks_statistic(picked, uniform_cdf);
  // pooled check at a looser level
  auto pv = simulate_pvalues(scenario(1.0, 0.5), 7);
  EXPECT_TRUE(checks::ks_accepts(pv.values, uniform_cdf, 0.001));
}

TEST(Pvalues, DeterministicAndInRange)
{
  auto a = simulate_pvalues(scenario(0.8, 0.25), 3);
  auto b = simulate_pvalues(scenario(0.8, 0.25), 3);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.truth_mask, b.truth_mask);
  EXPECT_NE(a.values, simulate_pvalues(scenario(0.8, 0.25), 4).values);
  for (double p : a.values) {
    EXPECT_GT(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Pvalues, NonNullsHavePower)
{
  auto pv = simulate_pvalues(scenario(0.5, 0.0), 8);
  int alt = 0, hit = 0;
  for (std::size_t i = 0; i < pv.values.size(); ++i)
    if (!pv.truth_mask[i]) {
      ++alt;
      hit += pv.values[i] < 0.05;
    }
  ASSERT_GT(alt, 0);
  EXPECT_GT(static_cast<double>(hit) / alt, 0.10);
}

TEST(Pvalues, NullCountIsBinomial)
{
  auto sc = scenario(0.9, 0.0);
  auto pv = simulate_pvalues(sc, 9);
  double n0 = static_cast<double>(std::count(pv.truth_mask.begin(), pv.truth_mask.end(), true));
  double sd = std::sqrt(2000 * 0.9 * 0.1);
  EXPECT_NEAR(n0, 1800.0, 3.0 * sd);
}

TEST(Pvalues, EffectDistribution)
{
  Engine rng(10);
  const double a = std::log2(1.2), b = 2.0;
  std::vector<double> one, mag;
  int neg = 0;
  for (int i = 0; i < 20000; ++i) {
    one.push_back(draw_effect(rng, a, b, Sidedness::one_sided));
    double e = draw_effect(rng, a, b, Sidedness::two_sided);
    neg += e < 0;
    mag.push_back(std::abs(e));
  }
  auto cdf = [&](double x) {
    double t = std::clamp((x - a) / (b - a), 0.0, 1.0);
    return t <= 0.5 ? 2 * t * t : 1 - 2 * (1 - t) * (1 - t);
  };
  EXPECT_TRUE(checks::ks_accepts(one, cdf, 0.01));
  EXPECT_TRUE(checks::ks_accepts(mag, cdf, 0.01));
  EXPECT_NEAR(neg, 10000, 3 * std::sqrt(5000.0));
  EXPECT_TRUE(std::all_of(one.begin(), one.end(), [&](double e) { return e >= a && e <= b; }));
}

TEST(Pvalues, RejectsBadScenarios)
{
  auto s = scenario(0.9, 0.0);
  s.m = 1;
  EXPECT_THROW(simulate_pvalues(s, 1), ParameterError);
  s = scenario(0.9, 1.0);
  EXPECT_THROW(simulate_pvalues(s, 1), ParameterError);
  s = scenario(1.2, 0.0);
  EXPECT_THROW(simulate_pvalues(s, 1), ParameterError);
  s = scenario(0.9, 0.0);
  s.block_size = 30;
  EXPECT_THROW(simulate_pvalues(s, 1), ParameterError);
  EXPECT_THROW(sidedness_from_string("both"), ParameterError);
}

TEST(Pi0, ConvexTracksTruth)
{
  std::vector<double> est;
  for (int r = 0; r < 20; ++r)
    est.push_back(estimate_pi0_convex(simulate_pvalues(scenario(0.9, 0.0), 100 + r).values));
  double mean = std::accumulate(est.begin(), est.end(), 0.0) / est.size();
  EXPECT_NEAR(mean, 0.9, 0.07);
}

TEST(Pi0, ExtremeInputs)
{
  Engine rng(12);
  std::vector<double> spike(1000), flat(1000);
  for (auto& v : spike)
    v = 1e-4 * uniform_open(rng);
  for (auto& v : flat)
    v = uniform_open(rng);
  EXPECT_LT(estimate_pi0_convex(spike), 0.3);
  EXPECT_GT(estimate_pi0_convex(flat), 0.85);
  SamplerConfig cfg;
  cfg.burn_in = 300;
  cfg.draws = 200;
  EXPECT_LT(estimate_pi0_bayes(spike, PriorConfig::adaptive_k(), cfg), 0.3);
  // with k = 1 allowed a psi_1 atom at 1 is also uniform, so the weight is shared
  EXPECT_GT(estimate_pi0_bayes(flat, PriorConfig::adaptive_k(), cfg), 0.7);
  flat.back() = 1.0;
  EXPECT_NO_THROW(estimate_pi0_convex(flat));
  flat.back() = 0.0;
  EXPECT_THROW(estimate_pi0_convex(flat), ParameterError);
}

TEST(Pi0, PermutationInvariant)
{
  auto p = simulate_pvalues(scenario(0.7, 0.0), 13).values;
  SamplerConfig cfg;
  cfg.burn_in = 50;
  cfg.draws = 20;
  double c = estimate_pi0_convex(p), b = estimate_pi0_bayes(p, PriorConfig::adaptive_k(), cfg);
  Engine rng(14);
  std::shuffle(p.begin(), p.end(), rng);
  EXPECT_EQ(estimate_pi0_convex(p), c);
  EXPECT_EQ(estimate_pi0_bayes(p, PriorConfig::adaptive_k(), cfg), b);
}

TEST(Scenarios, JsonForms)
{
  auto list = nlohmann::json::parse(R"({"scenarios": [{"alpha0": 0.5, "rho": 0.25, "G": 100, "sidedness": "one-sided"}]})");
  auto s = scenarios_from_json(list);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].alpha0, 0.5);
  EXPECT_EQ(s[0].block_size, 100);
  EXPECT_EQ(s[0].sidedness, Sidedness::one_sided);
  EXPECT_EQ(s[0].n_tests, 2000);

  auto grid = nlohmann::json::parse(R"({"n_tests": 1000, "grid": {"alpha0": [0.5, 0.9], "rho": [0, 0.5, 0.75]}})");
  auto g = scenarios_from_json(grid);
  ASSERT_EQ(g.size(), 6u);
  for (const auto& sc : g)
    EXPECT_EQ(sc.n_tests, 1000);
  EXPECT_EQ(g[5].alpha0, 0.9);
  EXPECT_EQ(g[5].rho, 0.75);

  auto back = nlohmann::json(s[0]).get<MtpScenario>();
  EXPECT_EQ(back.label(), s[0].label());
  EXPECT_THROW(scenarios_from_json(nlohmann::json::object()), ParameterError);
}

TEST(Experiment, SmallRunAndOutputs)
{
  MtpPlan plan;
  auto sc = scenario(0.9, 0.0);
  sc.n_tests = 200;
  plan.scenarios = { sc, scenario(0.5, 0.0) };
  plan.scenarios[1].n_tests = 200;
  plan.replications = 2;
  plan.chain.burn_in = 50;
  plan.chain.draws = 20;
  plan.threads = 2;
  auto res = run_mtp_experiment(plan);
  EXPECT_EQ(res.rows.size(), 8u);
  EXPECT_EQ(res.estimates(1, "convex").size(), 2u);
  plan.threads = 1;
  auto again = run_mtp_experiment(plan);
  std::ostringstream a, b, h;
  write_mtp_csv(a, res);
  write_mtp_csv(b, again);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "alpha0,rho,G,sidedness,rep,method,estimate");
  EXPECT_NE(a.str().find("\n0.9,0.0,50,two-sided,0,bayes,"), std::string::npos);
  write_mtp_histogram(h, res, 0);
  auto hist = h.str();
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 51);
}
