#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "irdual/finite_mdp.hpp"
#include "oracles.hpp"

using namespace irdual;
using namespace irdual::mdp;

namespace {

ScenarioSequence scenario(std::vector<int> v) { return ScenarioSequence{std::move(v), 1.0}; }

FiniteMDPData single_action_mdp() {
  FiniteMDPData d;
  d.horizon = 1;
  d.states = {"s"};
  d.actions = {"a0"};
  d.outcomes = {"v"};
  d.outcome_prob = {1.0};
  d.transition = {{{0}}};
  d.stage_reward = {{{0.0}}};
  d.terminal_reward = {1.0};
  return d;
}

}  // namespace

TEST(SolveDp, NoDecisionGivesTerminalReward) {
  const FiniteMDP m(single_action_mdp());
  EXPECT_DOUBLE_EQ(solve_dp(m).v0(m), 1.0);
}

TEST(SolveDp, MatchingGameIsHalf) {
  const FiniteMDP m(oracle::matching_mdp());
  const auto sv = solve_dp(m);
  EXPECT_DOUBLE_EQ(sv.v0(m), 0.5);
  EXPECT_EQ(sv.policy[0][0], 0);  // tie between both actions -> lowest index
}

TEST(SolveDp, DeterministicChainPicksOneTwice) {
  const FiniteMDP m(oracle::chain_mdp());
  const auto sv = solve_dp(m);
  EXPECT_DOUBLE_EQ(sv.v0(m), 2.0);
  EXPECT_EQ(sv.policy[0][0], 1);
  EXPECT_EQ(sv.policy[1][0], 1);
}

TEST(SolveDp, AgreesWithDirectRecursionOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto d = oracle::random_mdp(seed);
    const FiniteMDP m(d);
    EXPECT_NEAR(solve_dp(m).v0(m), oracle::value_recursive(d, 0, d.initial_state), 1e-12) << "seed " << seed;
  }
}

TEST(Construction, RejectsBadProbabilities) {
  auto d = oracle::matching_mdp();
  d.outcome_prob = {0.5, 0.6};
  EXPECT_THROW(FiniteMDP{d}, InputError);
  d.outcome_prob = {1.5, -0.5};
  EXPECT_THROW(FiniteMDP{d}, InputError);
}

TEST(Construction, RejectsPartialTransition) {
  auto d = oracle::matching_mdp();
  d.transition[0][1].pop_back();
  EXPECT_THROW(FiniteMDP{d}, InputError);
  d = oracle::matching_mdp();
  d.transition[0][0][0] = 7;
  EXPECT_THROW(FiniteMDP{d}, InputError);
}

TEST(Construction, RejectsZeroHorizonAndBadInitialState) {
  auto d = oracle::matching_mdp();
  d.horizon = 0;
  EXPECT_THROW(FiniteMDP{d}, InputError);
  d = oracle::matching_mdp();
  d.initial_state = 3;
  EXPECT_THROW(FiniteMDP{d}, InputError);
}

TEST(OptimalPenalty, MatchingExamples) {
  const FiniteMDP m(oracle::matching_mdp());
  const auto sv = solve_dp(m);
  const std::vector<int> a0{0};
  EXPECT_DOUBLE_EQ(optimal_penalty_value(m, sv, a0, scenario({0})), 0.5);
  EXPECT_DOUBLE_EQ(optimal_penalty_value(m, sv, a0, scenario({1})), -0.5);
}

TEST(OptimalPenalty, VanishesWithoutUncertainty) {
  const FiniteMDP m(oracle::chain_mdp());
  const auto sv = solve_dp(m);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const std::vector<int> acts{a, b};
      EXPECT_DOUBLE_EQ(optimal_penalty_value(m, sv, acts, scenario({0, 0})), 0.0);
    }
}

TEST(OptimalPenalty, LengthMismatchRejected) {
  const FiniteMDP m(oracle::chain_mdp());
  const auto sv = solve_dp(m);
  const std::vector<int> one{1};
  EXPECT_THROW(optimal_penalty_value(m, sv, one, scenario({0, 0})), InputError);
  const std::vector<int> two{1, 1};
  EXPECT_THROW(optimal_penalty_value(m, sv, two, scenario({0})), InputError);
}

TEST(InnerSolve, MatchingWithForesight) {
  const FiniteMDP m(oracle::matching_mdp());
  const auto zero = inner_solve(m, Penalty::zero(), scenario({0}));
  EXPECT_EQ(zero.actions, std::vector<int>{0});
  EXPECT_DOUBLE_EQ(zero.value, 1.0);
  const auto sv = solve_dp(m);
  for (bool fast : {true, false}) {
    const auto opt = inner_solve(m, optimal_penalty(m, sv), scenario({0}), fast);
    EXPECT_DOUBLE_EQ(opt.value, 0.5);
  }
}

TEST(InnerSolve, DeterministicMdpEqualsDp) {
  const FiniteMDP m(oracle::chain_mdp());
  EXPECT_DOUBLE_EQ(inner_solve(m, Penalty::zero(), scenario({0, 0}), false).value, solve_dp(m).v0(m));
}

TEST(InnerSolve, FastPathMatchesExhaustiveSearch) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const FiniteMDP m(oracle::random_mdp(seed));
    const auto sv = solve_dp(m);
    const Penalty mstar = optimal_penalty(m, sv);
    for_each_scenario(m, [&](const ScenarioSequence& sc) {
      const auto fast = inner_solve(m, mstar, sc, true);
      const auto slow = inner_solve(m, mstar.as_path_only(), sc, true);
      EXPECT_NEAR(fast.value, slow.value, 1e-12);
    });
  }
}

TEST(DualBound, MatchingExamples) {
  const FiniteMDP m(oracle::matching_mdp());
  EXPECT_DOUBLE_EQ(dual_bound_exact(m, Penalty::zero()), 1.0);
  EXPECT_NEAR(dual_bound_exact(m, optimal_penalty(m, solve_dp(m))), 0.5, 1e-12);
}

TEST(DualBound, GuardRejectsLargeEnumeration) {
  auto d = oracle::matching_mdp();
  EXPECT_THROW(dual_bound_exact(FiniteMDP(d), Penalty::zero(), true, 1), EnumerationGuardError);
  d.horizon = 25;
  d.stage_reward.assign(25, d.stage_reward[0]);
  const FiniteMDP big(d);
  EXPECT_THROW(dual_bound_exact(big, Penalty::zero()), EnumerationGuardError);
}

TEST(DualBound, AgreesWithNestedEnumerationOracle) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto d = oracle::random_mdp(seed);
    const FiniteMDP m(d);
    const double ref = oracle::dual_recursive(d, [](const std::vector<int>&, const std::vector<int>&) { return 0.0; });
    EXPECT_NEAR(dual_bound_exact(m, Penalty::zero(), false), ref, 1e-12) << "seed " << seed;
  }
}

// Weak duality for zero, M* and c M*, strong duality for M*.
TEST(Properties, WeakAndStrongDualityOnRandomInstances) {
  for (std::uint64_t seed = 1000; seed < 1150; ++seed) {
    const FiniteMDP m(oracle::random_mdp(seed));
    const auto sv = solve_dp(m);
    const double v0 = sv.v0(m);
    const Penalty mstar = optimal_penalty(m, sv);
    EXPECT_GE(dual_bound_exact(m, Penalty::zero()), v0 - 1e-12);
    EXPECT_NEAR(dual_bound_exact(m, mstar), v0, 1e-10);
    EXPECT_NEAR(dual_bound_exact(m, mstar, false), v0, 1e-10);
    for (double c : {0.0, 0.25, 0.5, 0.9, 1.0}) EXPECT_GE(dual_bound_exact(m, mstar.scaled(c)), v0 - 1e-12);
  }
}

// E[M*] = 0 under every Markov policy.
TEST(Properties, OptimalPenaltyHasZeroMeanUnderAllMarkovPolicies) {
  for (std::uint64_t seed = 2000; seed < 2040; ++seed) {
    const FiniteMDP m(oracle::random_mdp(seed, 2, 2, 3, 3));
    const auto sv = solve_dp(m);
    const Penalty mstar = optimal_penalty(m, sv);
    const int K = m.horizon(), S = m.num_states(), A = m.num_actions();
    std::vector<int> digits(K * S, 0);
    do {
      MarkovPolicy pol(K, std::vector<int>(S));
      for (int k = 0; k < K; ++k)
        for (int s = 0; s < S; ++s) pol[k][s] = digits[k * S + s];
      EXPECT_NEAR(expected_penalty(m, mstar, pol), 0.0, 1e-12);
    } while (next_combination(digits, A));
  }
}

// Along the DP-optimal actions the penalized reward equals V0 on every scenario.
TEST(Properties, PathwiseEqualityUnderOptimalPolicy) {
  for (std::uint64_t seed = 3000; seed < 3060; ++seed) {
    const FiniteMDP m(oracle::random_mdp(seed));
    const auto sv = solve_dp(m);
    const Penalty mstar = optimal_penalty(m, sv);
    for_each_scenario(m, [&](const ScenarioSequence& sc) {
      const auto acts = policy_actions(m, sv.policy, sc);
      EXPECT_NEAR(path_reward(m, acts, sc) - mstar(m, acts, sc), sv.v0(m), 1e-12);
    });
  }
}

TEST(VerifyDuality, MatchingTriple) {
  const auto r = verify_duality(FiniteMDP(oracle::matching_mdp()));
  EXPECT_TRUE(r.passed());
  EXPECT_DOUBLE_EQ(r.v0, 0.5);
  EXPECT_DOUBLE_EQ(r.zero_penalty_bound, 1.0);
  EXPECT_NEAR(r.optimal_penalty_bound, 0.5, 1e-12);
}

TEST(VerifyDuality, DeterministicAllEqual) {
  const auto r = verify_duality(FiniteMDP(oracle::chain_mdp()));
  EXPECT_TRUE(r.passed());
  EXPECT_DOUBLE_EQ(r.v0, r.zero_penalty_bound);
  EXPECT_DOUBLE_EQ(r.v0, r.optimal_penalty_bound);
}

TEST(VerifyDuality, StageDependentOutcomes) {
  auto d = oracle::matching_mdp();
  d.stage_outcome_prob = {{0.8, 0.2}};
  const auto r = verify_duality(FiniteMDP(d));
  EXPECT_TRUE(r.passed());
  EXPECT_DOUBLE_EQ(r.v0, 0.8);
}

TEST(VerifyDuality, RandomTwoOutcomeInstances) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = verify_duality(FiniteMDP(oracle::random_mdp(5000 + seed, 3, 2, 2, 3)));
    EXPECT_TRUE(r.passed()) << "seed " << seed;
  }
}
