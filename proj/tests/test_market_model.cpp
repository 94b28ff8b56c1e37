#include <gtest/gtest.h>

#include <cmath>

#include "irdual/market_model.hpp"
#include "irdual/shocks.hpp"
#include "oracles.hpp"

using namespace irdual;

TEST(ParameterSets, PublishedValues) {
  const ModelParams p1 = parameter_set(1);
  EXPECT_DOUBLE_EQ(p1.lambda, 0.336);
  EXPECT_DOUBLE_EQ(p1.mu0(1), 0.110);
  EXPECT_DOUBLE_EQ(p1.sigma(2, 1), 0.139);
  EXPECT_DOUBLE_EQ(p1.sigma_phi1(0), -0.741);
  EXPECT_DOUBLE_EQ(p1.sigma_phi2(0), 0.284);
  const ModelParams p2 = parameter_set(2);
  EXPECT_DOUBLE_EQ(p2.lambda, 1.671);
  EXPECT_DOUBLE_EQ(p2.sigma_phi2(0), 1.725);
  const ModelParams p3 = parameter_set(3);
  EXPECT_DOUBLE_EQ(p3.mu0(0), 0.142);
  EXPECT_DOUBLE_EQ(p3.sigma(2, 0), 0.207);
  const ModelParams p4 = parameter_set(4);
  EXPECT_DOUBLE_EQ(p4.sigma(2, 0), 0.206);
  EXPECT_DOUBLE_EQ(p4.sigma_phi1(1), 0.212);
  for (int id = 1; id <= 4; ++id) {
    const ModelParams p = parameter_set(id, 3.0);
    EXPECT_EQ(p.K, 10);
    EXPECT_DOUBLE_EQ(p.delta, 0.1);
    EXPECT_DOUBLE_EQ(p.gamma, 3.0);
    EXPECT_DOUBLE_EQ(p.alpha, 0.5);
  }
}

TEST(ParameterSets, UnknownIdListsValidOnes) {
  try {
    parameter_set(5);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("1, 2, 3, 4"), std::string::npos);
  }
}

TEST(Validate, RejectsBrokenInvariants) {
  ModelParams p = parameter_set(1);
  p.sigma(0, 1) = 0.1;
  EXPECT_THROW(p.validate(), InputError);
  p = parameter_set(1);
  p.sigma(1, 1) = 0.0;
  EXPECT_THROW(p.validate(), InputError);
  p = parameter_set(1);
  p.T = 1.1;
  EXPECT_THROW(p.validate(), InputError);
  p = parameter_set(1);
  p.gamma = 1.0;
  EXPECT_THROW(p.validate(), InputError);
  p = parameter_set(1);
  p.r_f = -20.0;
  EXPECT_THROW(p.validate(), InputError);
}

TEST(Stepping, ZeroShockStateDecaysGeometrically) {
  const ModelParams p = parameter_set(1);
  const Vec z = Vec::Zero(3), zt = Vec::Zero(1);
  EXPECT_NEAR(step_state(1.0, z, zt, p), 1.0 - 0.336 * 0.1, 1e-15);
}

TEST(Stepping, SingleAssetReturnMatchesHandComputation) {
  const ModelParams p = oracle::single_asset_params();
  const Vec z = Vec::Constant(1, 0.5);
  const double phi = 0.3;
  const double expected =
      std::exp((0.081 + 0.034 * phi - 0.5 * 0.186 * 0.186) * 0.1 + 0.186 * 0.5 * std::sqrt(0.1));
  EXPECT_NEAR(step_return(phi, z, p)(0), expected, 1e-14);
}

TEST(Stepping, AllCashWealthGrowsAtRiskFreeRate) {
  const ModelParams p = parameter_set(1);
  const Vec R = Vec::Constant(3, 1.3);
  EXPECT_NEAR(step_wealth(1.0, Vec::Zero(3), 0.0, R, p), 1.001, 1e-15);
}

TEST(Stepping, FullyInvestedWealthFollowsReturn) {
  const ModelParams p = parameter_set(1);
  const Vec R{{1.1, 0.9, 1.0}};
  const Vec Pi{{0.5, 0.25, 0.25}};
  // W Rf + (R - Rf)^T Pi = 1.001 + (0.099*0.5 - 0.101*0.25 - 0.001*0.25)
  EXPECT_NEAR(step_wealth(1.0, Pi, 0.0, R, p), 1.001 + 0.0495 - 0.02525 - 0.00025, 1e-15);
}

TEST(ConstraintSet, Membership) {
  const double Rf = 1.001;
  EXPECT_TRUE(in_constraint_set({Vec::Zero(2), 0.0}, Rf));
  EXPECT_TRUE(in_constraint_set({Vec{{0.5, 0.5}}, 0.0}, Rf));
  EXPECT_FALSE(in_constraint_set({Vec{{0.5, 0.5}}, 0.01}, Rf));
  EXPECT_FALSE(in_constraint_set({Vec{{-0.1, 0.5}}, 0.0}, Rf));
  EXPECT_TRUE(in_constraint_set({Vec::Zero(2), Rf}, Rf));
}

TEST(Simulation, ConsumingEverythingIsInadmissible) {
  const ModelParams p = parameter_set(1);
  const FeedbackPolicy eat_all = [&](int, double, double) { return Decision{Vec::Zero(3), p.gross_risk_free()}; };
  try {
    simulate_policy_path(p, eat_all, zero_shocks(p));
    FAIL() << "expected AdmissibilityError";
  } catch (const AdmissibilityError& e) {
    EXPECT_EQ(e.stage(), 0);
  }
}

TEST(Simulation, OutsideConstraintSetNamesStage) {
  const ModelParams p = parameter_set(1);
  const FeedbackPolicy late_leverage = [&](int k, double, double) {
    return Decision{Vec::Constant(3, k == 4 ? 0.6 : 0.1), 0.01};
  };
  try {
    simulate_policy_path(p, late_leverage, zero_shocks(p));
    FAIL() << "expected AdmissibilityError";
  } catch (const AdmissibilityError& e) {
    EXPECT_EQ(e.stage(), 4);
  }
}

TEST(Simulation, AllCashDeterministicPayoff) {
  ModelParams p = parameter_set(1);
  p.alpha = 0.0;
  const FeedbackPolicy cash = [](int, double, double) { return Decision{Vec::Zero(3), 0.0}; };
  const auto path = simulate_policy_path(p, cash, draw_shocks(p, 7, 0, 0));
  EXPECT_NEAR(path.W.back(), std::pow(1.001, 10), 1e-14);
  EXPECT_NEAR(path_utility(p, path.C, path.W.back()), crra(std::pow(1.001, 10), 1.5), 1e-14);
}

// W_k > 0 and C_k >= 0 along admissible trajectories.
TEST(Properties, AdmissibleTrajectoriesStayPositive) {
  const ModelParams p = parameter_set(1);
  const FeedbackPolicy pol = [](int k, double phi, double) {
    const double s = 0.3 + 0.05 * std::tanh(phi) + 0.01 * k;
    return Decision{Vec::Constant(3, s / 3.0), 0.2 * (1.0 - s)};
  };
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto path = simulate_policy_path(p, pol, draw_shocks(p, 3, 1, i));
    for (double w : path.W) EXPECT_GT(w, 0.0);
    for (double c : path.C) EXPECT_GE(c, 0.0);
  }
}

TEST(Shocks, AntitheticPairIsExactNegation) {
  const ModelParams p = parameter_set(2);
  const ShockPath s = draw_shocks(p, 42, 3, 17);
  const ShockPath m = s.mirrored();
  EXPECT_TRUE(m.antithetic);
  for (int k = 0; k < p.K; ++k) {
    for (int j = 0; j < p.n; ++j) EXPECT_EQ(m.Z(k, j), -s.Z(k, j));
    EXPECT_EQ(m.Ztilde(k, 0), -s.Ztilde(k, 0));
  }
}

TEST(Shocks, CounterBasedStreamsAreReproducibleAndDistinct) {
  const ModelParams p = parameter_set(1);
  const ShockPath a = draw_shocks(p, 42, 0, 5);
  const ShockPath b = draw_shocks(p, 42, 0, 5);
  EXPECT_EQ(a.Z, b.Z);
  EXPECT_NE(draw_shocks(p, 42, 0, 6).Z, a.Z);
  EXPECT_NE(draw_shocks(p, 42, 1, 5).Z, a.Z);
  EXPECT_NE(draw_shocks(p, 43, 0, 5).Z, a.Z);
}

TEST(Shocks, DrawsLookStandardNormal) {
  ModelParams p = parameter_set(1);
  double s1 = 0.0, s2 = 0.0;
  int n = 0;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    const ShockPath s = draw_shocks(p, 11, 0, i);
    for (int k = 0; k < p.K; ++k)
      for (int j = 0; j < p.n; ++j) {
        s1 += s.Z(k, j);
        s2 += s.Z(k, j) * s.Z(k, j);
        ++n;
      }
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

TEST(Utility, CrraValues) {
  EXPECT_DOUBLE_EQ(crra(1.0, 1.5), -2.0);
  EXPECT_DOUBLE_EQ(crra(0.1, 2.0), -10.0);
  EXPECT_NEAR(crra(4.0, 0.5), 4.0, 1e-15);
}
