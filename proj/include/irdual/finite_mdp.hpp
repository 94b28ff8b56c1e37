#pragma once

// Exact information-relaxation duality on small finite-horizon MDPs.
//
// Everything here works by enumeration: backward induction for the primal
// value, exhaustive search over action sequences for the pathwise inner
// problem, and exhaustive enumeration of disturbance sequences for the dual
// expectation. It is meant as a ground-truth oracle, not a scalable solver.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "irdual/errors.hpp"

namespace irdual::mdp {

inline constexpr std::size_t kDefaultEnumerationLimit = 1'000'000;

/// Raw description of a finite MDP. Indices refer to positions in the label vectors.
struct FiniteMDPData {
  int horizon = 1;
  std::vector<std::string> states;
  std::vector<std::string> actions;
  std::vector<std::string> outcomes;
  /// Shared per-stage outcome distribution.
  std::vector<double> outcome_prob;
  /// Optional stage-dependent override: horizon rows of outcome probabilities.
  std::vector<std::vector<double>> stage_outcome_prob;
  /// transition[state][action][outcome] -> next state index.
  std::vector<std::vector<std::vector<int>>> transition;
  /// stage_reward[stage][state][action].
  std::vector<std::vector<std::vector<double>>> stage_reward;
  std::vector<double> terminal_reward;
  int initial_state = 0;
};

/// Validated, immutable finite MDP.
class FiniteMDP {
 public:
  explicit FiniteMDP(FiniteMDPData data) : d_(std::move(data)) { validate(); }

  int horizon() const noexcept { return d_.horizon; }
  int num_states() const noexcept { return static_cast<int>(d_.states.size()); }
  int num_actions() const noexcept { return static_cast<int>(d_.actions.size()); }
  int num_outcomes() const noexcept { return static_cast<int>(d_.outcomes.size()); }
  int initial_state() const noexcept { return d_.initial_state; }

  /// Probability of outcome o at the transition out of stage k.
  double prob(int k, int o) const {
    return d_.stage_outcome_prob.empty() ? d_.outcome_prob[o] : d_.stage_outcome_prob[k][o];
  }
  int next(int s, int a, int o) const { return d_.transition[s][a][o]; }
  double reward(int k, int s, int a) const { return d_.stage_reward[k][s][a]; }
  double terminal(int s) const { return d_.terminal_reward[s]; }

  const FiniteMDPData& data() const noexcept { return d_; }

 private:
  static void check_distribution(const std::vector<double>& p, std::size_t n, const char* what) {
    if (p.size() != n) throw InputError(std::string(what) + ": size does not match outcome count");
    double total = 0.0;
    for (double v : p) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InputError(std::string(what) + ": negative or non-finite probability");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError(std::string(what) + ": probabilities do not sum to 1");
  }

  void validate() const {
    if (d_.horizon < 1) throw InputError("horizon must be at least 1");
    const std::size_t S = d_.states.size(), A = d_.actions.size(), O = d_.outcomes.size();
    if (S == 0 || A == 0 || O == 0) throw InputError("states, actions and outcomes must be non-empty");
    if (d_.stage_outcome_prob.empty()) {
      check_distribution(d_.outcome_prob, O, "outcome_prob");
    } else {
      if (d_.stage_outcome_prob.size() != static_cast<std::size_t>(d_.horizon))
        throw InputError("stage_outcome_prob must have one row per stage");
      for (const auto& row : d_.stage_outcome_prob) check_distribution(row, O, "stage_outcome_prob");
    }
    if (d_.transition.size() != S) throw InputError("transition must have one entry per state");
    for (const auto& by_action : d_.transition) {
      if (by_action.size() != A) throw InputError("transition must have one entry per action");
      for (const auto& by_outcome : by_action) {
        if (by_outcome.size() != O) throw InputError("transition must have one entry per outcome");
        for (int s : by_outcome)
          if (s < 0 || static_cast<std::size_t>(s) >= S) throw InputError("transition target out of range");
      }
    }
    if (d_.stage_reward.size() != static_cast<std::size_t>(d_.horizon))
      throw InputError("stage_reward must have one table per stage");
    for (const auto& table : d_.stage_reward) {
      if (table.size() != S) throw InputError("stage_reward table must have one row per state");
      for (const auto& row : table)
        if (row.size() != A) throw InputError("stage_reward row must have one entry per action");
    }
    if (d_.terminal_reward.size() != S) throw InputError("terminal_reward must have one entry per state");
    if (d_.initial_state < 0 || static_cast<std::size_t>(d_.initial_state) >= S)
      throw InputError("initial_state out of range");
  }

  FiniteMDPData d_;
};

/// Backward-induction values V_k(x) for k = 0..K and the greedy policy for k < K.
struct StageValues {
  std::vector<std::vector<double>> values;  // [stage][state]
  std::vector<std::vector<int>> policy;     // [stage][state]

  double v0(const FiniteMDP& m) const { return values[0][m.initial_state()]; }
};

/// One disturbance sequence (v_1..v_K) and its probability.
struct ScenarioSequence {
  std::vector<int> outcomes;
  double probability = 1.0;
};

inline double expected_next_value(const FiniteMDP& m, const std::vector<double>& next_values, int k, int s, int a) {
  double e = 0.0;
  for (int o = 0; o < m.num_outcomes(); ++o) e += m.prob(k, o) * next_values[m.next(s, a, o)];
  return e;
}

/// Exact backward induction; ties go to the lowest action index.
inline StageValues solve_dp(const FiniteMDP& m) {
  const int K = m.horizon(), S = m.num_states(), A = m.num_actions();
  StageValues sv;
  sv.values.assign(K + 1, std::vector<double>(S, 0.0));
  sv.policy.assign(K, std::vector<int>(S, 0));
  for (int s = 0; s < S; ++s) sv.values[K][s] = m.terminal(s);
  for (int k = K - 1; k >= 0; --k) {
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int a = 0; a < A; ++a) {
        const double q = m.reward(k, s, a) + expected_next_value(m, sv.values[k + 1], k, s, a);
        if (q > best) {
          best = q;
          arg = a;
        }
      }
      sv.values[k][s] = best;
      sv.policy[k][s] = arg;
    }
  }
  return sv;
}

/// State trajectory x_0..x_K induced by an action sequence and a scenario.
inline std::vector<int> trajectory(const FiniteMDP& m, std::span<const int> actions, const ScenarioSequence& sc) {
  std::vector<int> x(m.horizon() + 1);
  x[0] = m.initial_state();
  for (int k = 0; k < m.horizon(); ++k) x[k + 1] = m.next(x[k], actions[k], sc.outcomes[k]);
  return x;
}

inline void check_lengths(const FiniteMDP& m, std::span<const int> actions, const ScenarioSequence& sc) {
  const auto K = static_cast<std::size_t>(m.horizon());
  if (actions.size() != K) throw InputError("action sequence length must equal the horizon");
  if (sc.outcomes.size() != K) throw InputError("scenario length must equal the horizon");
  for (int a : actions)
    if (a < 0 || a >= m.num_actions()) throw InputError("action index out of range");
  for (int o : sc.outcomes)
    if (o < 0 || o >= m.num_outcomes()) throw InputError("outcome index out of range");
}

/// Pathwise reward sum_k g_k(x_k, a_k) + terminal(x_K).
inline double path_reward(const FiniteMDP& m, std::span<const int> actions, const ScenarioSequence& sc) {
  const auto x = trajectory(m, actions, sc);
  double total = m.terminal(x[m.horizon()]);
  for (int k = 0; k < m.horizon(); ++k) total += m.reward(k, x[k], actions[k]);
  return total;
}

/// A penalty M(a, v). Stage-separable penalties expose their per-transition
/// term so the inner problem can be solved by a deterministic DP instead of
/// enumerating action sequences.
class Penalty {
 public:
  using PathFn = std::function<double(const FiniteMDP&, std::span<const int>, const ScenarioSequence&)>;
  /// term(stage k, state x_k, action a_k, outcome v_{k+1})
  using StageFn = std::function<double(int, int, int, int)>;

  static Penalty zero() {
    Penalty p;
    p.stage_ = [](int, int, int, int) { return 0.0; };
    return p;
  }
  static Penalty from_path(PathFn fn) {
    Penalty p;
    p.path_ = std::move(fn);
    return p;
  }
  static Penalty from_stage_terms(StageFn fn) {
    Penalty p;
    p.stage_ = std::move(fn);
    return p;
  }

  bool stage_separable() const noexcept { return static_cast<bool>(stage_); }
  double stage_term(int k, int s, int a, int o) const { return stage_(k, s, a, o); }

  double operator()(const FiniteMDP& m, std::span<const int> actions, const ScenarioSequence& sc) const {
    if (path_) return path_(m, actions, sc);
    const auto x = trajectory(m, actions, sc);
    double total = 0.0;
    for (int k = 0; k < m.horizon(); ++k) total += stage_(k, x[k], actions[k], sc.outcomes[k]);
    return total;
  }

  /// c * M; stays stage-separable if M is.
  Penalty scaled(double c) const {
    if (stage_) {
      return from_stage_terms([f = stage_, c](int k, int s, int a, int o) { return c * f(k, s, a, o); });
    }
    return from_path([f = path_, c](const FiniteMDP& m, std::span<const int> a, const ScenarioSequence& sc) {
      return c * f(m, a, sc);
    });
  }

  /// Same penalty with the stage-separable fast path hidden, forcing exhaustive search.
  Penalty as_path_only() const {
    if (path_) return *this;
    return from_path([self = *this](const FiniteMDP& m, std::span<const int> a, const ScenarioSequence& sc) {
      return self(m, a, sc);
    });
  }

 private:
  PathFn path_;
  StageFn stage_;
};

/// Value-function-based penalty: sum_k V_{k+1}(x_{k+1}) - E[V_{k+1}(x_{k+1}) | x_k, a_k].
inline Penalty optimal_penalty(const FiniteMDP& m, const StageValues& sv) {
  return Penalty::from_stage_terms([m, sv](int k, int s, int a, int o) {
    const auto& next = sv.values[k + 1];
    return next[m.next(s, a, o)] - expected_next_value(m, next, k, s, a);
  });
}

inline double optimal_penalty_value(const FiniteMDP& m, const StageValues& sv, std::span<const int> actions,
                                    const ScenarioSequence& sc) {
  check_lengths(m, actions, sc);
  return optimal_penalty(m, sv)(m, actions, sc);
}

struct InnerSolution {
  std::vector<int> actions;
  double value = 0.0;
};

inline std::size_t checked_power(std::size_t base, int exp, std::size_t limit, const char* what) {
  std::size_t total = 1;
  for (int i = 0; i < exp; ++i) {
    if (total > limit / base) throw EnumerationGuardError(what, limit + 1, limit);
    total *= base;
  }
  if (total > limit) throw EnumerationGuardError(what, total, limit);
  return total;
}

/// Advances a mixed-radix counter; returns false after the last combination.
inline bool next_combination(std::vector<int>& digits, int radix) {
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (++*it < radix) return true;
    *it = 0;
  }
  return false;
}

/// Perfect-foresight inner problem max_a { sum g + terminal - M(a, v) }.
///
/// Exhaustive over all action sequences unless the penalty is stage-separable
/// and `use_fast_path` is set, in which case a deterministic backward DP along
/// the fixed scenario is used. Ties go to the lexicographically smallest sequence.
inline InnerSolution inner_solve(const FiniteMDP& m, const Penalty& penalty, const ScenarioSequence& sc,
                                 bool use_fast_path = true, std::size_t limit = kDefaultEnumerationLimit) {
  const int K = m.horizon(), S = m.num_states(), A = m.num_actions();
  if (sc.outcomes.size() != static_cast<std::size_t>(K)) throw InputError("scenario length must equal the horizon");

  if (use_fast_path && penalty.stage_separable()) {
    std::vector<std::vector<double>> best(K + 1, std::vector<double>(S));
    std::vector<std::vector<int>> arg(K, std::vector<int>(S, 0));
    for (int s = 0; s < S; ++s) best[K][s] = m.terminal(s);
    for (int k = K - 1; k >= 0; --k) {
      const int o = sc.outcomes[k];
      for (int s = 0; s < S; ++s) {
        double b = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
          const double q = m.reward(k, s, a) - penalty.stage_term(k, s, a, o) + best[k + 1][m.next(s, a, o)];
          if (q > b) {
            b = q;
            arg[k][s] = a;
          }
        }
        best[k][s] = b;
      }
    }
    InnerSolution sol;
    sol.value = best[0][m.initial_state()];
    int s = m.initial_state();
    for (int k = 0; k < K; ++k) {
      sol.actions.push_back(arg[k][s]);
      s = m.next(s, arg[k][s], sc.outcomes[k]);
    }
    return sol;
  }

  checked_power(static_cast<std::size_t>(A), K, limit, "action-sequence enumeration");
  InnerSolution sol;
  sol.value = -std::numeric_limits<double>::infinity();
  std::vector<int> seq(K, 0);
  do {
    const double v = path_reward(m, seq, sc) - penalty(m, seq, sc);
    if (v > sol.value) {
      sol.value = v;
      sol.actions = seq;
    }
  } while (next_combination(seq, A));
  return sol;
}

/// Calls fn(scenario) for every disturbance sequence, in lexicographic order.
template <typename Fn>
void for_each_scenario(const FiniteMDP& m, Fn&& fn, std::size_t limit = kDefaultEnumerationLimit) {
  const int K = m.horizon(), O = m.num_outcomes();
  checked_power(static_cast<std::size_t>(O), K, limit, "scenario enumeration");
  ScenarioSequence sc;
  sc.outcomes.assign(K, 0);
  do {
    sc.probability = 1.0;
    for (int k = 0; k < K; ++k) sc.probability *= m.prob(k, sc.outcomes[k]);
    if (sc.probability > 0.0) fn(static_cast<const ScenarioSequence&>(sc));
  } while (next_combination(sc.outcomes, O));
}

/// Exact dual value (LM)(x_0) = E[inner_solve], summed in scenario order.
inline double dual_bound_exact(const FiniteMDP& m, const Penalty& penalty, bool use_fast_path = true,
                               std::size_t limit = kDefaultEnumerationLimit) {
  double total = 0.0;
  for_each_scenario(
      m, [&](const ScenarioSequence& sc) { total += sc.probability * inner_solve(m, penalty, sc, use_fast_path, limit).value; },
      limit);
  return total;
}

/// A Markov (non-anticipative) policy: action per (stage, state).
using MarkovPolicy = std::vector<std::vector<int>>;

/// Action sequence generated by a Markov policy along a scenario.
inline std::vector<int> policy_actions(const FiniteMDP& m, const MarkovPolicy& policy, const ScenarioSequence& sc) {
  std::vector<int> a(m.horizon());
  int s = m.initial_state();
  for (int k = 0; k < m.horizon(); ++k) {
    a[k] = policy[k][s];
    s = m.next(s, a[k], sc.outcomes[k]);
  }
  return a;
}

/// Exact E[M(a, v)] under a non-anticipative policy.
inline double expected_penalty(const FiniteMDP& m, const Penalty& penalty, const MarkovPolicy& policy,
                               std::size_t limit = kDefaultEnumerationLimit) {
  double total = 0.0;
  for_each_scenario(
      m, [&](const ScenarioSequence& sc) { total += sc.probability * penalty(m, policy_actions(m, policy, sc), sc); },
      limit);
  return total;
}

struct CheckFailure {
  std::string check;
  double expected = 0.0;
  double actual = 0.0;
  double tolerance = 0.0;
};

struct DualityReport {
  double v0 = 0.0;
  double zero_penalty_bound = 0.0;
  double optimal_penalty_bound = 0.0;
  /// E[M*] under the DP-optimal policy (complementary slackness instance).
  double optimal_penalty_mean = 0.0;
  std::vector<CheckFailure> failures;

  bool passed() const noexcept { return failures.empty(); }
};

/// Weak/strong duality and complementary-slackness checks by full enumeration.
inline DualityReport verify_duality(const FiniteMDP& m, std::size_t limit = kDefaultEnumerationLimit) {
  DualityReport r;
  const StageValues sv = solve_dp(m);
  const Penalty mstar = optimal_penalty(m, sv);
  r.v0 = sv.v0(m);
  r.zero_penalty_bound = dual_bound_exact(m, Penalty::zero(), true, limit);
  r.optimal_penalty_bound = dual_bound_exact(m, mstar, true, limit);
  r.optimal_penalty_mean = expected_penalty(m, mstar, sv.policy, limit);

  const double scale = std::max(1.0, std::abs(r.v0));
  if (r.zero_penalty_bound < r.v0 - 1e-12 * scale)
    r.failures.push_back({"weak_duality_zero_penalty", r.v0, r.zero_penalty_bound, 1e-12 * scale});
  if (std::abs(r.optimal_penalty_bound - r.v0) > 1e-10 * scale)
    r.failures.push_back({"strong_duality_optimal_penalty", r.v0, r.optimal_penalty_bound, 1e-10 * scale});
  if (std::abs(r.optimal_penalty_mean) > 1e-12 * scale)
    r.failures.push_back({"optimal_penalty_zero_mean", 0.0, r.optimal_penalty_mean, 1e-12 * scale});
  return r;
}

}  // namespace irdual::mdp
