#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <kmono/baselines.hpp>
#include <kmono/checks.hpp>
#include <kmono/metrics.hpp>
#include <kmono/rng.hpp>
#include <kmono/simgen.hpp>

using namespace kmono;

TEST(Grenander, TwoPoints)
{
  std::vector<double> x{ 0.25, 0.75 };
  auto d = grenander(x);
  ASSERT_EQ(d.heights.size(), 3u);
  EXPECT_DOUBLE_EQ(d.heights[0], 2.0);
  EXPECT_DOUBLE_EQ(d.heights[1], 1.0);
  EXPECT_DOUBLE_EQ(d.heights[2], 0.0);
  EXPECT_EQ(d.breakpoints, (std::vector<double>{ 0.0, 0.25, 0.75, 1.0 }));
  EXPECT_DOUBLE_EQ(d.pdf(0.1), 2.0);
  EXPECT_DOUBLE_EQ(d.pdf(0.25), 2.0);
  EXPECT_DOUBLE_EQ(d.pdf(0.5), 1.0);
}

TEST(Grenander, SinglePoint)
{
  for (double c : { 0.1, 0.5, 0.9 }) {
    std::vector<double> x{ c };
    auto d = grenander(x);
    EXPECT_DOUBLE_EQ(d.pdf(c / 2), 1.0 / c);
    EXPECT_DOUBLE_EQ(d.integral(), 1.0);
  }
}

TEST(Grenander, MatchesBruteForceHull)
{
  Engine rng(41);
  for (int t = 0; t < 200; ++t) {
    int n = 1 + static_cast<int>(uniform_open(rng) * 60);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x)
      v = uniform_open(rng) * uniform_open(rng);
    if (t % 10 == 0)
      x.push_back(x.front()); // ties
    auto fast = grenander(x);
    auto slow = checks::reference_lcm(x);
    ASSERT_EQ(fast.breakpoints, slow.breakpoints) << "trial " << t;
    ASSERT_EQ(fast.heights, slow.heights) << "trial " << t;
    EXPECT_NEAR(fast.integral(), 1.0, 1e-12);
    for (std::size_t j = 1; j < fast.heights.size(); ++j)
      EXPECT_LE(fast.heights[j], fast.heights[j - 1]);
  }
}

TEST(Grenander, PermutationInvariant)
{
  auto x = sample_density(density_spec("g3"), 200, 5);
  auto a = grenander(x);
  Engine rng(7);
  std::shuffle(x.begin(), x.end(), rng);
  auto b = grenander(x);
  EXPECT_EQ(a.breakpoints, b.breakpoints);
  EXPECT_EQ(a.heights, b.heights);
}

TEST(Grenander, RejectsBadInput)
{
  EXPECT_THROW(grenander(std::vector<double>{}), ParameterError);
  EXPECT_THROW(grenander(std::vector<double>{ 0.2, 1.5 }), ParameterError);
}

TEST(Convex, TwoPointsBeatUniform)
{
  std::vector<double> x{ 0.3, 0.7 };
  auto fit = convex_npmle(x);
  EXPECT_TRUE(fit.converged);
  EXPECT_GE(fit.loglik, 0.0);
  EXPECT_NEAR(fit.loglik, fit.loglik_of(x), 1e-9);
}

TEST(Convex, OptimalityAndOrdering)
{
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto x = sample_density(density_spec(seed % 2 ? "g2" : "g5"), 300, seed);
    auto fit = convex_npmle(x);
    ASSERT_TRUE(fit.converged);
    double worst = convex_gradient_uniform(fit, x);
    for (double th : fit.candidates)
      worst = std::max(worst, convex_gradient(fit, x, th));
    EXPECT_LE(worst, 1.0 + 1e-5);
    // every fitted mass point has D = 1
    for (const auto& a : fit.atoms)
      if (a.weight > 1e-6)
        EXPECT_NEAR(convex_gradient(fit, x, a.theta), 1.0, 1e-3);
    EXPECT_LE(fit.loglik, grenander(x).loglik(x) + 1e-8);
    double mass = fit.w_unif;
    for (const auto& a : fit.atoms)
      mass += a.weight;
    EXPECT_NEAR(mass, 1.0, 1e-9);
  }
}

TEST(Convex, LikelihoodNeverDecreases)
{
  auto x = sample_density(density_spec("g4"), 400, 9);
  auto fit = convex_npmle(x);
  ASSERT_GE(fit.loglik_trace.size(), 2u);
  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
    EXPECT_GE(fit.loglik_trace[i], fit.loglik_trace[i - 1]);
}

TEST(Convex, AccuracyOnLinearTarget)
{
  auto spec = density_spec("g2");
  auto grid = GridDensity::canonical_grid();
  double total = 0.0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    auto x = sample_density(spec, 500, 100 + static_cast<std::uint64_t>(r));
    auto fit = convex_npmle(x);
    auto est = GridDensity::tabulate({ [&](double t) { return fit.pdf(t); }, {} }, grid);
    total += mse_grid(est, spec.density);
  }
  EXPECT_NEAR(total / reps, 0.005, 0.005);
}

TEST(Convex, NullProportion)
{
  ConvexFit f;
  f.w_unif = 0.37;
  EXPECT_EQ(pi0_from_convex(f), 0.37);
  f.w_unif = 1.0;
  EXPECT_EQ(pi0_from_convex(f), 1.0);
  // spike near zero leaves little constant mass
  Engine rng(3);
  std::vector<double> x(500);
  for (auto& v : x)
    v = 1e-3 * uniform_open(rng);
  EXPECT_LT(pi0_from_convex(convex_npmle(x)), 0.05);
}

TEST(Convex, RejectsBadInput)
{
  EXPECT_THROW(convex_npmle(std::vector<double>{ 0.5 }), ParameterError);
  EXPECT_THROW(convex_npmle(std::vector<double>{ 0.5, 1.2 }), ParameterError);
  EXPECT_THROW(convex_npmle(std::vector<double>{ 0.5, 0.6 }, 1), ParameterError);
}

TEST(Baselines, JsonRoundTrip)
{
  auto x = sample_density(density_spec("g3"), 100, 12);
  auto d = grenander(x);
  auto db = nlohmann::json::parse(nlohmann::json(d).dump()).get<StepDensity>();
  EXPECT_EQ(db.breakpoints, d.breakpoints);
  EXPECT_EQ(db.heights, d.heights);
  auto fit = convex_npmle(x);
  auto fb = nlohmann::json::parse(nlohmann::json(fit).dump()).get<ConvexFit>();
  EXPECT_EQ(fb.w_unif, fit.w_unif);
  ASSERT_EQ(fb.atoms.size(), fit.atoms.size());
  for (double t : { 0.01, 0.3, 0.9 })
    EXPECT_EQ(fb.pdf(t), fit.pdf(t));
}
