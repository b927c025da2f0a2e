#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "tfcl/losses.hpp"
#include "tfcl/scenario.hpp"

using namespace tfcl;

namespace {

ScenarioPoint div_temp(double c, double tau, int n = 2) {
  return {c, n, TemperatureParam::fixed(tau)};
}
ScenarioPoint learnable(double c, double t, int n = 2) {
  return {c, n, TemperatureParam::learnable(t)};
}
ScenarioPoint temp_free(double c, int n = 2) { return {c, n, TemperatureParam::temperature_free()}; }

double fd_in_c(ScenarioPoint p, double h = 1e-6) {
  ScenarioPoint up = p, dn = p;
  up.c += h;
  dn.c -= h;
  return (scenario_loss(up) - scenario_loss(dn)) / (2 * h);
}

double fd_in_t(ScenarioPoint p, double h = 1e-6) {
  ScenarioPoint up = p, dn = p;
  up.variant.t += h;
  dn.variant.t -= h;
  return (scenario_loss(up) - scenario_loss(dn)) / (2 * h);
}

}  // namespace

TEST(ScenarioLoss, Examples) {
  EXPECT_NEAR(scenario_loss(div_temp(0.5, 0.25)), std::log1p(std::exp(-4.0)), 1e-15);
  EXPECT_NEAR(scenario_loss(div_temp(0.5, 0.25)), 0.018150, 1e-6);
  EXPECT_NEAR(scenario_loss(temp_free(0.0)), std::log(2.0), 1e-15);
  EXPECT_NEAR(scenario_loss(div_temp(1.0, 1.0)), 0.126928, 1e-6);
  EXPECT_NEAR(scenario_loss(div_temp(1.0, 1.0)), -std::log(1 / (1 + std::exp(-2.0))), 1e-15);
}

TEST(ScenarioLoss, MatchesBatchLoss) {
  for (double c : {0.0, 0.3, 0.9}) {
    for (int n : {2, 5}) {
      const SimilarityMatrix s = scenario_similarity(c, n);
      EXPECT_NEAR(ntxent_loss(s, 0.25).row_loss[0], scenario_loss(div_temp(c, 0.25, n)), 1e-12);
      EXPECT_NEAR(tf_infonce_loss(s).row_loss[n - 1], scenario_loss(temp_free(c, n)), 1e-12);
    }
  }
}

TEST(ScenarioGradScale, Examples) {
  EXPECT_NEAR(scenario_grad_scale(div_temp(1.0, 1.0)), 2 / (1 + std::exp(2.0)), 1e-15);
  EXPECT_NEAR(scenario_grad_scale(div_temp(1.0, 1.0)), 0.23840, 1e-5);
  EXPECT_NEAR(scenario_grad_scale(div_temp(0.5, 0.1)), 20 / (1 + std::exp(10.0)), 1e-15);
  EXPECT_NEAR(scenario_grad_scale(div_temp(0.5, 0.1)), 9.08e-4, 1e-6);
  for (int n : {2, 4, 8, 16}) EXPECT_LT(scenario_grad_scale(temp_free(1 - 1e-9, n)), 1e-8);
  // Near C = 1 the scale is (N - 1)(1 - C) / 2 to first order.
  EXPECT_NEAR(scenario_grad_scale(temp_free(1 - 1e-9, 1000)), 999 * 1e-9 / 2, 1e-12);
  EXPECT_DOUBLE_EQ(scenario_grad_scale(temp_free(0.0, 2)), 2.0);
}

TEST(ScenarioGradScale, LearnableZeroAtCZero) {
  for (int k = 0; k <= 100; ++k) {
    const double t = -5 + 0.1 * k;
    EXPECT_EQ(scenario_grad_scale(learnable(0.0, t)), 0.0);
  }
}

TEST(ScenarioGradScale, TradeOffAtOptimum) {
  EXPECT_GT(scenario_grad_scale(div_temp(1.0, 1.0)), 0.2);
  EXPECT_LT(scenario_grad_scale(div_temp(1.0, 0.1)), 7e-4);
}

TEST(ScenarioGradScale, MultiPairIncreasesWithN) {
  double prev = 0;
  for (int n = 2; n <= 64; ++n) {
    const double g = scenario_grad_scale(div_temp(1.0, 0.25, n));
    EXPECT_GT(g, prev);
    prev = g;
  }
}

TEST(ScenarioGradScale, MatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uc(0.01, 0.99);
  std::uniform_real_distribution<double> utau(0.1, 2.0);
  std::uniform_real_distribution<double> ut(-2.0, 2.0);
  std::uniform_int_distribution<int> un(2, 64);
  for (int trial = 0; trial < 1000; ++trial) {
    const double c = uc(rng);
    const int n = un(rng);
    const auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
    };
    const ScenarioPoint d = div_temp(c, utau(rng), n);
    EXPECT_LE(rel(scenario_grad_scale(d), std::abs(fd_in_c(d))), 1e-6);
    const ScenarioPoint f = temp_free(c, n);
    EXPECT_LE(rel(scenario_grad_scale(f), std::abs(fd_in_c(f))), 1e-6);
    const ScenarioPoint l = learnable(c, ut(rng), n);
    EXPECT_LE(rel(scenario_grad_scale(l), std::abs(fd_in_t(l))), 1e-6);
  }
}

TEST(Scenario, InvalidPoints) {
  EXPECT_TFCL_ERROR(scenario_loss(temp_free(-0.1)), ErrorCode::InvalidScenario);
  EXPECT_TFCL_ERROR(scenario_loss(temp_free(1.1)), ErrorCode::InvalidScenario);
  EXPECT_TFCL_ERROR(scenario_loss(temp_free(0.5, 1)), ErrorCode::InvalidScenario);
  EXPECT_TFCL_ERROR(scenario_grad_scale(div_temp(0.5, 0.0)), ErrorCode::InvalidScenario);
  EXPECT_TFCL_ERROR(scenario_grad_scale(learnable(0.5, 800)), ErrorCode::InvalidScenario);
}

TEST(SampleCurve, FigureTwoMaximumNearZero) {
  const CurveData curve = sample_curve(TemperatureParam::fixed(0.1), 2);
  ASSERT_EQ(curve.grid.size(), 512u);
  EXPECT_DOUBLE_EQ(curve.grid.front(), 1e-4);
  EXPECT_DOUBLE_EQ(curve.grid.back(), 1 - 1e-4);
  double best = 0;
  for (double v : curve.values) best = std::max(best, v);
  EXPECT_EQ(best, curve.values.front());
  EXPECT_NEAR(best, 10.0, 1e-2);
}

TEST(SampleCurve, FigureFiveMonotone) {
  for (int n : {2, 4, 8, 16}) {
    const CurveData curve = sample_curve(TemperatureParam::temperature_free(), n);
    for (std::size_t k = 1; k < curve.values.size(); ++k) {
      EXPECT_LT(curve.values[k], curve.values[k - 1]);
      EXPECT_GE(curve.values[k], 0.0);
    }
  }
}

TEST(SampleCurve, GridErrors) {
  const auto tf = TemperatureParam::temperature_free();
  EXPECT_TFCL_ERROR(sample_curve(tf, 2, {0.1, 0.9, 1}), ErrorCode::InvalidGrid);
  EXPECT_TFCL_ERROR(sample_curve(tf, 2, {0.0, 0.9, 10}), ErrorCode::InvalidGrid);
  EXPECT_TFCL_ERROR(sample_curve(tf, 2, {0.1, 1.0, 10}), ErrorCode::InvalidGrid);
  EXPECT_TFCL_ERROR(sample_curve(tf, 2, {0.5, 0.4, 10}), ErrorCode::InvalidGrid);
  EXPECT_TFCL_ERROR(sample_temperature_curve(0.5, 2, {0.0, 1.0, 10}), ErrorCode::InvalidGrid);
}

TEST(SampleCurve, LossQuantityAndTemperatureAxis) {
  const CurveData loss =
      sample_curve(TemperatureParam::fixed(0.5), 4, {0.1, 0.9, 5}, Quantity::Loss);
  for (std::size_t k = 0; k < loss.grid.size(); ++k) {
    EXPECT_DOUBLE_EQ(loss.values[k], scenario_loss(div_temp(loss.grid[k], 0.5, 4)));
  }
  const CurveData taus = sample_temperature_curve(0.75, 2, {0.05, 1.0, 20});
  EXPECT_EQ(taus.axis, SweepAxis::Tau);
  for (std::size_t k = 0; k < taus.grid.size(); ++k) {
    EXPECT_DOUBLE_EQ(taus.values[k], scenario_grad_scale(div_temp(0.75, taus.grid[k])));
  }
}

TEST(VanishingRegion, FixedTauPointOne) {
  const CurveData curve = sample_curve(TemperatureParam::fixed(0.1), 2);
  const auto regions = find_vanishing_region(curve, 0.01);
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_LE(regions[0].lo, 0.4);
  EXPECT_GE(regions[0].hi, 0.7);
  const double crossing = 0.1 * std::log(1999.0) / 2;
  EXPECT_NEAR(crossing, 0.380, 1e-3);
  const double step = (curve.grid[1] - curve.grid[0]);
  EXPECT_NEAR(regions[0].lo, crossing, step);
  EXPECT_DOUBLE_EQ(regions[0].hi, curve.grid.back());
}

TEST(VanishingRegion, TempFreeAbutsOne) {
  const CurveData curve = sample_curve(TemperatureParam::temperature_free(), 2);
  const auto regions = find_vanishing_region(curve, 0.01);
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_DOUBLE_EQ(regions[0].hi, curve.grid.back());
  EXPECT_GT(regions[0].lo, 0.9);
}

TEST(VanishingRegion, NoneAndInterior) {
  CurveData flat;
  flat.grid = {0.1, 0.2, 0.3};
  flat.values = {1.0, 1.0, 1.0};
  EXPECT_TRUE(find_vanishing_region(flat).empty());
  flat.values = {0.0, 1.0, 0.001};
  const auto r = find_vanishing_region(flat, 0.01);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].lo, 0.1);
  EXPECT_EQ(r[0].hi, 0.1);
  EXPECT_EQ(r[1].lo, 0.3);
}

TEST(CurveCsv, HeaderAndRows) {
  std::ostringstream os;
  write_curves_csv(os, {sample_curve(TemperatureParam::fixed(1.0), 2, {0.25, 0.75, 3}),
                        sample_curve(TemperatureParam::temperature_free(), 4, {0.25, 0.75, 2}),
                        sample_curve(TemperatureParam::learnable(-0.5), 2, {0.25, 0.75, 2})});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "variant,tau_or_t,N,C,value");
  std::getline(is, line);
  EXPECT_EQ(line.rfind("div-temp,1,2,0.25,", 0), 0u) << line;
  int rows = 1;
  while (std::getline(is, line)) {
    ++rows;
    if (rows == 4) {
      EXPECT_EQ(line.rfind("temp-free,,4,0.25,", 0), 0u) << line;
    }
    if (rows == 6) {
      EXPECT_EQ(line.rfind("learnable,-0.5,2,0.25,", 0), 0u) << line;
    }
  }
  EXPECT_EQ(rows, 7);
}
