#pragma once

// Pathwise penalties for the perfect-information relaxation of the portfolio
// problem. Once a shock path and a baseline (non-anticipative) policy are
// fixed, each penalty is affine in the decisions (Pi_k, C_k):
//
//   M(x) = constant + sum_k lin_Pi[k]^T Pi_k + sum_k lin_C[k] C_k
//
// which keeps the inner maximization concave.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "irdual/dp_solver.hpp"
#include "irdual/market_model.hpp"
#include "irdual/shocks.hpp"

namespace irdual {

enum class PenaltyKind { zero, m1, m2 };

inline std::string to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::zero:
      return "zero";
    case PenaltyKind::m1:
      return "m1";
    case PenaltyKind::m2:
      return "m2";
  }
  return "unknown";
}

inline PenaltyKind parse_penalty_kind(const std::string& s) {
  if (s == "zero") return PenaltyKind::zero;
  if (s == "m1") return PenaltyKind::m1;
  if (s == "m2") return PenaltyKind::m2;
  throw InputError("unknown penalty '" + s + "' (expected zero, m1 or m2)");
}

/// Baseline quantities at stage k, all fixed once the path and baseline policy are.
struct PenaltyStage {
  double phi = 0.0;       ///< baseline state
  double W = 0.0;         ///< baseline wealth
  double J = 0.0;         ///< J_k at the baseline state
  double dJ = 0.0;        ///< slope of J_k at the baseline state
  Mat sigma;              ///< return volatility (n x n)
  RowVec sigma_phi1;      ///< 1 x n
  RowVec sigma_phi2;      ///< 1 x d
  Vec R;                  ///< return realized over (k, k+1]
  Vec Pi;                 ///< baseline risky holdings (wealth units)
  double C = 0.0;         ///< baseline consumption amount
};

struct PenaltyContext {
  std::vector<PenaltyStage> stages;  ///< K entries
  double W_final = 0.0;              ///< baseline terminal wealth
  ShockPath shocks;
  /// Realized utility of the baseline policy on this path.
  double baseline_utility = 0.0;

  int K() const { return static_cast<int>(stages.size()); }
};

struct PenaltyForm {
  double constant = 0.0;
  Mat lin_Pi;  ///< K x n
  Vec lin_C;   ///< K

  static PenaltyForm zero(int K, int n) { return {0.0, Mat::Zero(K, n), Vec::Zero(K)}; }
};

/// Decision vector layout: (Pi_0, C_0, Pi_1, C_1, ..., Pi_{K-1}, C_{K-1}).
inline Vec stack_decisions(const std::vector<Vec>& Pi, const std::vector<double>& C) {
  const int K = static_cast<int>(Pi.size());
  const int n = K > 0 ? static_cast<int>(Pi[0].size()) : 0;
  Vec x(K * (n + 1));
  for (int k = 0; k < K; ++k) {
    x.segment(k * (n + 1), n) = Pi[k];
    x(k * (n + 1) + n) = C[k];
  }
  return x;
}

/// Coefficient vector of the form in the stacked decision layout.
inline Vec linear_coefficients(const PenaltyForm& f) {
  const int K = static_cast<int>(f.lin_Pi.rows()), n = static_cast<int>(f.lin_Pi.cols());
  Vec l(K * (n + 1));
  for (int k = 0; k < K; ++k) {
    l.segment(k * (n + 1), n) = f.lin_Pi.row(k).transpose();
    l(k * (n + 1) + n) = f.lin_C(k);
  }
  return l;
}

inline double evaluate(const PenaltyForm& f, const Vec& x) { return f.constant + linear_coefficients(f).dot(x); }

inline double evaluate(const PenaltyForm& f, const std::vector<Vec>& Pi, const std::vector<double>& C) {
  return evaluate(f, stack_decisions(Pi, C));
}

/// Runs the baseline policy on the path and records everything the penalties need.
/// `vg` must be the grid the penalties are built from; `policy` may differ from its grid policy.
inline PenaltyContext build_context(const ModelParams& p, const ValueGrid& vg, const FeedbackPolicy& policy,
                                    const ShockPath& shocks) {
  const MarketPath path = simulate_policy_path(p, policy, shocks);
  PenaltyContext ctx;
  ctx.shocks = shocks;
  ctx.stages.resize(p.K);
  for (int k = 0; k < p.K; ++k) {
    auto& st = ctx.stages[k];
    st.phi = path.phi[k];
    st.W = path.W[k];
    st.J = interpolate_J(vg, k, st.phi);
    st.dJ = gradient_J(vg, k, st.phi);
    st.sigma = p.sigma;
    st.sigma_phi1 = p.sigma_phi1;
    st.sigma_phi2 = p.sigma_phi2;
    st.R = path.R[k];
    st.Pi = path.Pi[k];
    st.C = path.C[k];
  }
  ctx.W_final = path.W.back();
  ctx.baseline_utility = path_utility(p, path.C, ctx.W_final);
  return ctx;
}

namespace detail {

/// dJ sigma_phi1 Z_{k+1} sqrt(delta) + dJ sigma_phi2 Ztilde_{k+1} sqrt(delta).
inline double state_noise_term(const PenaltyContext& ctx, int k, double delta) {
  const auto& st = ctx.stages[k];
  const double sd = std::sqrt(delta);
  const double z = st.sigma_phi1.dot(ctx.shocks.Z.row(k));
  const double zt = st.sigma_phi2.size() > 0 ? st.sigma_phi2.dot(ctx.shocks.Ztilde.row(k)) : 0.0;
  return st.dJ * (z + zt) * sd;
}

}  // namespace detail

/// M1: the state-noise terms are decision-free constants; only the return-noise
/// term, linear in Pi_k, enters the decisions.
inline PenaltyForm m1_form(const PenaltyContext& ctx, const ModelParams& p) {
  const int K = ctx.K(), n = p.n;
  const double g = p.gamma, sd = std::sqrt(p.delta);
  PenaltyForm f = PenaltyForm::zero(K, n);
  for (int k = 0; k < K; ++k) {
    const auto& st = ctx.stages[k];
    const double disc = std::pow(p.beta, k * p.delta);
    f.constant += disc * std::pow(st.W, 1.0 - g) * detail::state_noise_term(ctx, k, p.delta);
    const Vec ret_noise = st.sigma * ctx.shocks.Z.row(k).transpose() * sd;
    f.lin_Pi.row(k) = disc * (1.0 - g) * std::pow(st.W, -g) * st.J * ret_noise.transpose();
  }
  return f;
}

/// M2: as M1, with the state-noise terms of stage k >= 1 linearized in the
/// previous decision (Pi_{k-1}, C_{k-1}) around the baseline decision.
inline PenaltyForm m2_form(const PenaltyContext& ctx, const ModelParams& p) {
  PenaltyForm f = m1_form(ctx, p);
  const double g = p.gamma, Rf = p.gross_risk_free();
  for (int k = 1; k < ctx.K(); ++k) {
    const auto& st = ctx.stages[k];
    const auto& prev = ctx.stages[k - 1];
    const double kappa = std::pow(p.beta, k * p.delta) * (1.0 - g) * std::pow(st.W, -g) *
                         detail::state_noise_term(ctx, k, p.delta);
    const Vec excess = (prev.R.array() - Rf).matrix();
    f.lin_Pi.row(k - 1) += kappa * excess.transpose();
    f.lin_C(k - 1) -= kappa;
    f.constant -= kappa * (excess.dot(prev.Pi) - prev.C);
  }
  return f;
}

inline PenaltyForm build_form(PenaltyKind kind, const PenaltyContext& ctx, const ModelParams& p) {
  switch (kind) {
    case PenaltyKind::zero:
      return PenaltyForm::zero(ctx.K(), p.n);
    case PenaltyKind::m1:
      return m1_form(ctx, p);
    case PenaltyKind::m2:
      return m2_form(ctx, p);
  }
  return PenaltyForm::zero(ctx.K(), p.n);
}

using FormBuilder = std::function<PenaltyForm(const PenaltyContext&, const ModelParams&)>;

inline FormBuilder form_builder(PenaltyKind kind) {
  return [kind](const PenaltyContext& ctx, const ModelParams& p) { return build_form(kind, ctx, p); };
}

struct FeasibilityReport {
  double mean = 0.0;
  double std_error = 0.0;
  int samples = 0;
  bool pass = false;
};

/// Monte Carlo test of E[M] = 0 under a non-anticipative policy.
///
/// The penalty is built from the baseline policy and evaluated at the decisions
/// of `evaluation_policy` (the baseline itself when empty) on the same path.
/// With antithetic sampling each pair average counts as one sample.
/// Passes iff |mean| <= 3 stderr.
inline FeasibilityReport feasibility_check(const FormBuilder& builder, const ModelParams& p, const ValueGrid& vg,
                                           const FeedbackPolicy& policy, int n_paths, std::uint64_t seed,
                                           bool antithetic = true, const FeedbackPolicy& evaluation_policy = {}) {
  if (n_paths < 100) throw InputError("feasibility check needs at least 100 paths");
  auto penalty_on = [&](const ShockPath& s) {
    const PenaltyContext ctx = build_context(p, vg, policy, s);
    const PenaltyForm form = builder(ctx, p);
    if (!evaluation_policy) {
      std::vector<Vec> Pi;
      std::vector<double> C;
      for (const auto& st : ctx.stages) {
        Pi.push_back(st.Pi);
        C.push_back(st.C);
      }
      return evaluate(form, Pi, C);
    }
    const MarketPath other = simulate_policy_path(p, evaluation_policy, s);
    return evaluate(form, other.Pi, other.C);
  };
  std::vector<double> samples(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    const ShockPath s = draw_shocks(p, seed, 0, static_cast<std::uint64_t>(i));
    samples[i] = antithetic ? 0.5 * (penalty_on(s) + penalty_on(s.mirrored())) : penalty_on(s);
  }
  FeasibilityReport r;
  r.samples = n_paths;
  double sum = 0.0;
  for (double v : samples) sum += v;
  r.mean = sum / n_paths;
  double ss = 0.0;
  for (double v : samples) ss += (v - r.mean) * (v - r.mean);
  r.std_error = std::sqrt(ss / (n_paths - 1) / n_paths);
  r.pass = std::abs(r.mean) <= 3.0 * r.std_error;
  return r;
}

inline FeasibilityReport feasibility_check(PenaltyKind kind, const ModelParams& p, const ValueGrid& vg,
                                           const FeedbackPolicy& policy, int n_paths, std::uint64_t seed,
                                           bool antithetic = true) {
  return feasibility_check(form_builder(kind), p, vg, policy, n_paths, seed, antithetic);
}

}  // namespace irdual
