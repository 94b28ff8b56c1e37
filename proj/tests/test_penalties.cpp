#include <gtest/gtest.h>

#include <cmath>

#include "irdual/dp_solver.hpp"
#include "irdual/penalties.hpp"
#include "irdual/shocks.hpp"
#include "oracles.hpp"

using namespace irdual;

namespace {

const ModelParams& set1() {
  static const ModelParams p = parameter_set(1);
  return p;
}

const ValueGrid& set1_grid() {
  static const ValueGrid vg = solve_value_grid(set1());
  return vg;
}

std::pair<std::vector<Vec>, std::vector<double>> baseline_decisions(const PenaltyContext& ctx) {
  std::vector<Vec> Pi;
  std::vector<double> C;
  for (const auto& st : ctx.stages) {
    Pi.push_back(st.Pi);
    C.push_back(st.C);
  }
  return {Pi, C};
}

PenaltyContext hand_context(double sigma_ret) {
  PenaltyContext ctx;
  PenaltyStage st;
  st.phi = 0.0;
  st.W = 1.0;
  st.J = -2.0;
  st.dJ = 0.5;
  st.sigma = Mat::Constant(1, 1, sigma_ret);
  st.sigma_phi1 = RowVec::Constant(1, 0.3);
  st.sigma_phi2 = RowVec::Zero(1);
  st.R = Vec::Constant(1, 1.02);
  st.Pi = Vec::Constant(1, 0.4);
  st.C = 0.1;
  ctx.stages.push_back(st);
  ctx.shocks = ShockPath{Mat::Constant(1, 1, 1.0), Mat::Zero(1, 1), false};
  return ctx;
}

}  // namespace

TEST(Context, ZeroShockAllCashCompounding) {
  ModelParams p = set1();
  p.phi0 = 0.5;
  const FeedbackPolicy cash = [](int, double, double) { return Decision{Vec::Zero(3), 0.0}; };
  const auto ctx = build_context(p, set1_grid(), cash, zero_shocks(p));
  ASSERT_EQ(ctx.K(), 10);
  for (int k = 0; k < 10; ++k) {
    EXPECT_NEAR(ctx.stages[k].W, std::pow(p.gross_risk_free(), k), 1e-14);
    EXPECT_NEAR(ctx.stages[k].phi, 0.5 * std::pow(1.0 - p.lambda * p.delta, k), 1e-14);
  }
}

TEST(Context, AntitheticPairMirrorsShocks) {
  const ModelParams& p = set1();
  const auto pol = grid_policy(set1_grid(), p);
  const ShockPath s = draw_shocks(p, 1, 0, 0);
  const auto a = build_context(p, set1_grid(), pol, s);
  const auto b = build_context(p, set1_grid(), pol, s.mirrored());
  EXPECT_EQ(a.shocks.Z, -b.shocks.Z);
  EXPECT_EQ(a.shocks.Ztilde, -b.shocks.Ztilde);
}

TEST(Context, SingleStageHorizon) {
  const ModelParams p = oracle::single_asset_params(1.5, 1);
  const auto vg = solve_value_grid(p);
  const auto ctx = build_context(p, vg, grid_policy(vg, p), draw_shocks(p, 3, 0, 0));
  EXPECT_EQ(ctx.K(), 1);
}

TEST(Forms, ZeroShocksGiveZeroForms) {
  const ModelParams& p = set1();
  const auto ctx = build_context(p, set1_grid(), grid_policy(set1_grid(), p), zero_shocks(p));
  for (auto kind : {PenaltyKind::zero, PenaltyKind::m1, PenaltyKind::m2}) {
    const auto f = build_form(kind, ctx, p);
    EXPECT_EQ(f.constant, 0.0);
    EXPECT_TRUE(f.lin_Pi.isZero(0.0));
    EXPECT_TRUE(f.lin_C.isZero(0.0));
  }
}

TEST(Forms, HandSetM1Example) {
  ModelParams p = oracle::single_asset_params(1.5, 1);
  const double sigma = 0.2;
  const auto f = m1_form(hand_context(sigma), p);
  EXPECT_NEAR(f.constant, 0.5 * 0.3 * std::sqrt(0.1), 1e-15);
  EXPECT_NEAR(f.constant, 0.047434, 1e-6);
  EXPECT_NEAR(f.lin_Pi(0, 0), (1.0 - 1.5) * (-2.0) * sigma * std::sqrt(0.1), 1e-15);
  EXPECT_EQ(f.lin_C(0), 0.0);
}

TEST(Forms, M1HasNoConsumptionTerms) {
  const ModelParams& p = set1();
  const auto ctx = build_context(p, set1_grid(), grid_policy(set1_grid(), p), draw_shocks(p, 5, 0, 1));
  EXPECT_TRUE(m1_form(ctx, p).lin_C.isZero(0.0));
  EXPECT_FALSE(m2_form(ctx, p).lin_C.isZero(0.0));
  EXPECT_EQ(m2_form(ctx, p).lin_C(p.K - 1), 0.0);  // no stage after the last decision
}

// M2 equals M1 at the baseline decisions on every path.
TEST(Properties, AnchorIdentity) {
  const ModelParams& p = set1();
  const auto pol = grid_policy(set1_grid(), p);
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto ctx = build_context(p, set1_grid(), pol, draw_shocks(p, 8, 0, i));
    const auto [Pi, C] = baseline_decisions(ctx);
    const double m1 = evaluate(m1_form(ctx, p), Pi, C);
    const double m2 = evaluate(m2_form(ctx, p), Pi, C);
    EXPECT_NEAR(m2, m1, 1e-13 * std::max(1.0, std::abs(m1)));
  }
}

// Evaluation is exactly affine: finite-difference slopes equal the coefficients.
TEST(Properties, Affinity) {
  const ModelParams& p = set1();
  const auto ctx = build_context(p, set1_grid(), grid_policy(set1_grid(), p), draw_shocks(p, 2, 0, 9));
  for (auto kind : {PenaltyKind::m1, PenaltyKind::m2}) {
    const auto f = build_form(kind, ctx, p);
    const Vec lin = linear_coefficients(f);
    Vec x = Vec::Constant(lin.size(), 0.3);
    EXPECT_NEAR(evaluate(f, x), f.constant + lin.dot(x), 1e-15);
    const Vec fd = oracle::fd_gradient([&](const Vec& y) { return evaluate(f, y); }, x, 1e-3);
    EXPECT_LE((fd - lin).lpNorm<Eigen::Infinity>(), 1e-11);
  }
}

TEST(Feasibility, ZeroPenaltyIsExactlyZero) {
  const ModelParams& p = set1();
  const auto r = feasibility_check(PenaltyKind::zero, p, set1_grid(), grid_policy(set1_grid(), p), 100, 1);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(Feasibility, M1AndM2PassUnderBaseline) {
  const ModelParams& p = set1();
  const auto pol = grid_policy(set1_grid(), p);
  for (auto kind : {PenaltyKind::m1, PenaltyKind::m2}) {
    const auto r = feasibility_check(kind, p, set1_grid(), pol, 2000, 77);
    EXPECT_TRUE(r.pass) << to_string(kind) << " mean " << r.mean << " se " << r.std_error;
    EXPECT_GT(r.std_error, 0.0);
  }
}

TEST(Feasibility, ZeroMeanUnderAnotherNonAnticipativePolicy) {
  const ModelParams& p = set1();
  const FeedbackPolicy other = [](int k, double phi, double) {
    const double s = 0.5 + 0.2 * std::tanh(phi);
    return Decision{Vec{{s * 0.5, s * 0.3, s * 0.2}}, 0.05 + 0.01 * k};
  };
  for (auto kind : {PenaltyKind::m1, PenaltyKind::m2}) {
    const auto r = feasibility_check(form_builder(kind), p, set1_grid(), grid_policy(set1_grid(), p), 2000, 31, true,
                                     other);
    EXPECT_TRUE(r.pass) << to_string(kind) << " mean " << r.mean << " se " << r.std_error;
  }
}

TEST(Feasibility, BiasedPenaltyFails) {
  const ModelParams& p = set1();
  const FormBuilder biased = [](const PenaltyContext& ctx, const ModelParams& q) {
    PenaltyForm f = m1_form(ctx, q);
    f.constant += 1.0;
    return f;
  };
  const auto r = feasibility_check(biased, p, set1_grid(), grid_policy(set1_grid(), p), 500, 3);
  EXPECT_FALSE(r.pass);
}

TEST(Feasibility, NeedsEnoughPaths) {
  const ModelParams& p = set1();
  EXPECT_THROW(feasibility_check(PenaltyKind::m1, p, set1_grid(), grid_policy(set1_grid(), p), 99, 1), InputError);
}

TEST(PenaltyKinds, ParseAndPrint) {
  for (auto k : {PenaltyKind::zero, PenaltyKind::m1, PenaltyKind::m2}) EXPECT_EQ(parse_penalty_kind(to_string(k)), k);
  EXPECT_THROW(parse_penalty_kind("m3"), InputError);
}
