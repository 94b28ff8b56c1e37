#pragma once

// Monte Carlo lower bounds (simulating the grid policy) and dual upper bounds
// (pathwise perfect-foresight problems with an affine penalty), organized in
// independent runs with statistics taken across run means.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "irdual/concave_program.hpp"
#include "irdual/dp_solver.hpp"
#include "irdual/market_model.hpp"
#include "irdual/penalties.hpp"
#include "irdual/shocks.hpp"

namespace irdual {

struct RunConfig {
  int paths_per_run = 100;  ///< base draws per run; antithetic doubles the path count
  int runs = 10;
  bool antithetic = true;
  std::uint64_t seed = 42;
  PenaltyKind penalty = PenaltyKind::zero;
  int workers = 1;  ///< does not affect results

  void validate() const {
    if (paths_per_run < 1) throw InputError("paths_per_run must be at least 1");
    if (runs < 2) throw InputError("runs must be at least 2");
    if (workers < 1) throw InputError("workers must be at least 1");
  }
  int paths_in_run() const { return antithetic ? 2 * paths_per_run : paths_per_run; }
};

enum class BoundKind { lower, upper };

inline std::string to_string(BoundKind k) { return k == BoundKind::lower ? "lower" : "upper"; }

struct BoundEstimate {
  BoundKind kind = BoundKind::lower;
  PenaltyKind penalty = PenaltyKind::zero;  ///< meaningful for upper bounds only
  std::vector<double> run_means;
  double mean = 0.0;
  double std_error = 0.0;
  double ce_mean = 0.0;
  double ce_std_error = 0.0;
  int flagged_paths = 0;
  int total_paths = 0;
  double gamma = 0.0;
  RunConfig config;

  /// Upper bounds are accepted only if fewer than 1% of inner solves were flagged.
  bool accepted() const { return total_paths == 0 || flagged_paths * 100 < total_paths; }
};

/// U(CE) = value, i.e. CE = ((1-gamma) value)^{1/(1-gamma)}.
inline double certainty_equivalent(double value, double gamma) {
  if (!((1.0 - gamma) * value > 0.0)) throw std::domain_error("certainty equivalent needs (1-gamma)*value > 0");
  return std::pow((1.0 - gamma) * value, 1.0 / (1.0 - gamma));
}

struct DualityGap {
  double value_gap_frac = 0.0;
  double ce_gap_frac = 0.0;
};

/// Gap between the lower bound and the smaller of two upper bounds, as a fraction of the lower bound.
inline DualityGap duality_gap(const BoundEstimate& lower, const BoundEstimate& upper_a, const BoundEstimate& upper_b) {
  DualityGap g;
  const double up = std::min(upper_a.mean, upper_b.mean);
  const double up_ce = std::min(upper_a.ce_mean, upper_b.ce_mean);
  g.value_gap_frac = (up - lower.mean) / std::abs(lower.mean);
  g.ce_gap_frac = (up_ce - lower.ce_mean) / lower.ce_mean;
  return g;
}

namespace detail {

/// Calls fn(i) for i in [0, n) on `workers` threads; exceptions rethrown in index order.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](int w, int stride) {
    for (int i = w; i < n; i += stride) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int nw = std::max(1, std::min(workers, n));
  if (nw == 1) {
    body(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w) pool.emplace_back(body, w, nw);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double std_error_of(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

/// Shock path number j of a run: base draw j/2 (antithetic) or j.
inline ShockPath run_path_shocks(const ModelParams& p, const RunConfig& cfg, int run, int j) {
  if (!cfg.antithetic) return draw_shocks(p, cfg.seed, run, j);
  const ShockPath base = draw_shocks(p, cfg.seed, run, j / 2);
  return (j % 2 == 0) ? base : base.mirrored();
}

inline std::string path_tag(const RunConfig& cfg, int run, int j) {
  return " [seed=" + std::to_string(cfg.seed) + " run=" + std::to_string(run) +
         " draw=" + std::to_string(cfg.antithetic ? j / 2 : j) +
         (cfg.antithetic && j % 2 == 1 ? " antithetic" : "") + "]";
}

inline BoundEstimate summarize(BoundKind kind, const ModelParams& p, const RunConfig& cfg,
                               const std::vector<std::vector<double>>& values) {
  BoundEstimate est;
  est.kind = kind;
  est.penalty = cfg.penalty;
  est.gamma = p.gamma;
  est.config = cfg;
  std::vector<double> ce;
  for (const auto& run : values) {
    est.total_paths += static_cast<int>(run.size());
    est.run_means.push_back(mean_of(run));
    ce.push_back(certainty_equivalent(est.run_means.back(), p.gamma));
  }
  est.mean = mean_of(est.run_means);
  est.std_error = std_error_of(est.run_means, est.mean);
  est.ce_mean = mean_of(ce);
  est.ce_std_error = std_error_of(ce, est.ce_mean);
  return est;
}

}  // namespace detail

/// Per-path values of the grid policy, [run][path].
inline std::vector<std::vector<double>> lower_bound_paths(const ModelParams& p, const ValueGrid& vg,
                                                          const RunConfig& cfg) {
  cfg.validate();
  const FeedbackPolicy policy = grid_policy(vg, p);
  const int per_run = cfg.paths_in_run();
  std::vector<std::vector<double>> values(cfg.runs, std::vector<double>(per_run));
  detail::parallel_for(cfg.runs * per_run, cfg.workers, [&](int idx) {
    const int r = idx / per_run, j = idx % per_run;
    try {
      const MarketPath path = simulate_policy_path(p, policy, detail::run_path_shocks(p, cfg, r, j));
      values[r][j] = path_utility(p, path.C, path.W.back());
    } catch (const AdmissibilityError& e) {
      throw AdmissibilityError(e.stage(), std::string(e.what()) + detail::path_tag(cfg, r, j));
    }
  });
  return values;
}

inline BoundEstimate lower_bound(const ModelParams& p, const ValueGrid& vg, const RunConfig& cfg) {
  return detail::summarize(BoundKind::lower, p, cfg, lower_bound_paths(p, vg, cfg));
}

/// Pathwise inner objective over x = (Pi_0, C_0, ..., Pi_{K-1}, C_{K-1}) with
/// wealth eliminated through the (affine) budget recursion:
///
///   sum_k alpha beta^{k delta} U(C_k) delta + (1-alpha) beta^{K delta} U(W_K(x)) - M(x)
class InnerObjective {
 public:
  InnerObjective(const ModelParams& p, Vec w_const, Mat w_lin, Vec penalty_lin, double penalty_const)
      : K_(p.K), n_(p.n), gamma_(p.gamma), w_const_(std::move(w_const)), w_lin_(std::move(w_lin)),
        penalty_lin_(std::move(penalty_lin)), penalty_const_(penalty_const) {
    cons_weight_.resize(K_);
    for (int k = 0; k < K_; ++k) cons_weight_(k) = p.alpha * std::pow(p.beta, k * p.delta) * p.delta;
    term_weight_ = (1.0 - p.alpha) * std::pow(p.beta, p.K * p.delta);
  }

  int dim() const { return K_ * (n_ + 1); }
  int c_index(int k) const { return k * (n_ + 1) + n_; }

  /// Wealth at stage k as a function of the decisions.
  double wealth(int k, const Vec& x) const { return w_const_(k) + w_lin_.row(k).dot(x); }
  const Vec& wealth_const() const { return w_const_; }
  const Mat& wealth_lin() const { return w_lin_; }

  double utility(const Vec& x) const {
    double v = 0.0;
    for (int k = 0; k < K_; ++k) {
      if (cons_weight_(k) == 0.0) continue;
      const double C = x(c_index(k));
      if (C <= 0.0 && gamma_ > 1.0) return -std::numeric_limits<double>::infinity();
      if (C < 0.0) return -std::numeric_limits<double>::infinity();
      v += cons_weight_(k) * crra(C, gamma_);
    }
    if (term_weight_ > 0.0) {
      const double W = wealth(K_, x);
      if (W <= 0.0) return -std::numeric_limits<double>::infinity();
      v += term_weight_ * crra(W, gamma_);
    }
    return v;
  }

  double penalty(const Vec& x) const { return penalty_const_ + penalty_lin_.dot(x); }

  double value(const Vec& x) const {
    const double u = utility(x);
    return std::isfinite(u) ? u - penalty(x) : u;
  }

  Vec gradient(const Vec& x) const {
    Vec g = -penalty_lin_;
    for (int k = 0; k < K_; ++k) {
      if (cons_weight_(k) == 0.0) continue;
      g(c_index(k)) += cons_weight_(k) * std::pow(x(c_index(k)), -gamma_);
    }
    if (term_weight_ > 0.0) g += term_weight_ * std::pow(wealth(K_, x), -gamma_) * w_lin_.row(K_).transpose();
    return g;
  }

  Mat hessian(const Vec& x) const {
    Mat H = Mat::Zero(dim(), dim());
    for (int k = 0; k < K_; ++k) {
      if (cons_weight_(k) == 0.0) continue;
      H(c_index(k), c_index(k)) = -gamma_ * cons_weight_(k) * std::pow(x(c_index(k)), -gamma_ - 1.0);
    }
    if (term_weight_ > 0.0) {
      const Vec gK = w_lin_.row(K_).transpose();
      H += -gamma_ * term_weight_ * std::pow(wealth(K_, x), -gamma_ - 1.0) * (gK * gK.transpose());
    }
    return H;
  }

 private:
  int K_, n_;
  double gamma_;
  Vec w_const_;  ///< K+1
  Mat w_lin_;    ///< (K+1) x dim
  Vec penalty_lin_;
  double penalty_const_;
  Vec cons_weight_;
  double term_weight_ = 0.0;
};

struct InnerProblem {
  InnerObjective objective;
  opt::LinearConstraints constraints;
  Vec x0;
  Vec baseline;  ///< baseline decisions in the same layout
};

/// Builds the pathwise inner problem for one shock path and penalty.
///
/// Constraints: Pi_k >= 0, C_k >= 0, C_k <= R_f (W_k(x) - 1^T Pi_k), plus the
/// domain guards C_k >= 1e-10 and W_K(x) >= 1e-10. The start point blends the
/// baseline fractions 1e-4 of the way toward (1e-3/n, 1e-3) and re-simulates
/// wealth, which is strictly feasible.
inline InnerProblem assemble_inner(const ModelParams& p, const PenaltyForm& form, const PenaltyContext& ctx) {
  const int K = p.K, n = p.n, m = K * (n + 1);
  const double Rf = p.gross_risk_free();
  if (ctx.K() != K) throw InputError("penalty context does not match the horizon");

  Vec w_const(K + 1);
  Mat w_lin = Mat::Zero(K + 1, m);
  w_const(0) = p.W0;
  for (int k = 0; k < K; ++k) {
    w_const(k + 1) = Rf * w_const(k);
    w_lin.row(k + 1) = Rf * w_lin.row(k);
    w_lin.block(k + 1, k * (n + 1), 1, n) += (ctx.stages[k].R.array() - Rf).matrix().transpose();
    w_lin(k + 1, k * (n + 1) + n) -= 1.0;
  }

  opt::LinearConstraints cons;
  cons.A.setZero(2 * K + 1, m);
  cons.b.setZero(2 * K + 1);
  for (int k = 0; k < K; ++k) {
    // C_k + R_f 1^T Pi_k - R_f W_k(x) <= 0
    cons.A.row(k) = -Rf * w_lin.row(k);
    cons.A.block(k, k * (n + 1), 1, n).array() += Rf;
    cons.A(k, k * (n + 1) + n) += 1.0;
    cons.b(k) = Rf * w_const(k);
    // -C_k <= -guard
    cons.A(K + k, k * (n + 1) + n) = -1.0;
    cons.b(K + k) = -kDomainGuard;
  }
  cons.A.row(2 * K) = -w_lin.row(K);
  cons.b(2 * K) = w_const(K) - kDomainGuard;
  cons.nonneg.assign(m, true);

  InnerObjective obj(p, w_const, w_lin, linear_coefficients(form), form.constant);

  constexpr double theta = 1e-4, eps = 1e-3;
  Vec x0(m), baseline(m);
  double W = p.W0;
  for (int k = 0; k < K; ++k) {
    const auto& st = ctx.stages[k];
    baseline.segment(k * (n + 1), n) = st.Pi;
    baseline(k * (n + 1) + n) = st.C;
    const Vec pi = (1.0 - theta) * (st.Pi / st.W) + theta * Vec::Constant(n, eps / n);
    const double c = (1.0 - theta) * (st.C / st.W) + theta * eps;
    x0.segment(k * (n + 1), n) = W * pi;
    x0(k * (n + 1) + n) = W * c;
    W = step_wealth(W, W * pi, W * c, st.R, p);
  }
  return InnerProblem{std::move(obj), std::move(cons), std::move(x0), std::move(baseline)};
}

struct InnerPathResult {
  double value = 0.0;              ///< inner optimum (objective at the returned iterate)
  double gap = 0.0;                ///< certified bound on (true optimum - value)
  double baseline_utility = 0.0;   ///< realized utility of the baseline policy
  double penalty_at_baseline = 0.0;
  double objective_at_baseline = 0.0;
  opt::Status status = opt::Status::infeasible;
  int iterations = 0;
};

inline opt::Options inner_solver_options() {
  opt::Options o;
  o.tol = 1e-6;
  // Large-gamma paths lose stationarity digits to rounding; the gap certificate still holds.
  o.kkt_tol = 1e-4;
  return o;
}

/// Solves the inner problem on one shock path.
inline InnerPathResult solve_inner_path(const ModelParams& p, const ValueGrid& vg, const FeedbackPolicy& policy,
                                        PenaltyKind kind, const ShockPath& shocks,
                                        const opt::Options& options = inner_solver_options()) {
  const PenaltyContext ctx = build_context(p, vg, policy, shocks);
  const PenaltyForm form = build_form(kind, ctx, p);
  const InnerProblem prob = assemble_inner(p, form, ctx);
  const opt::Solution sol = opt::maximize(prob.objective, prob.constraints, prob.x0, options);
  InnerPathResult r;
  r.value = sol.f;
  r.gap = sol.gap;
  r.status = sol.status;
  r.iterations = sol.iterations;
  r.baseline_utility = ctx.baseline_utility;
  r.penalty_at_baseline = evaluate(form, prob.baseline);
  r.objective_at_baseline = prob.objective.value(prob.baseline);
  return r;
}

/// Per-path inner results, [run][path].
inline std::vector<std::vector<InnerPathResult>> upper_bound_paths(const ModelParams& p, const ValueGrid& vg,
                                                                   const RunConfig& cfg) {
  cfg.validate();
  const FeedbackPolicy policy = grid_policy(vg, p);
  const int per_run = cfg.paths_in_run();
  std::vector<std::vector<InnerPathResult>> out(cfg.runs, std::vector<InnerPathResult>(per_run));
  detail::parallel_for(cfg.runs * per_run, cfg.workers, [&](int idx) {
    const int r = idx / per_run, j = idx % per_run;
    try {
      out[r][j] = solve_inner_path(p, vg, policy, cfg.penalty, detail::run_path_shocks(p, cfg, r, j));
    } catch (const AdmissibilityError& e) {
      throw AdmissibilityError(e.stage(), std::string(e.what()) + detail::path_tag(cfg, r, j));
    }
  });
  return out;
}

inline BoundEstimate summarize_upper(const ModelParams& p, const RunConfig& cfg,
                                     const std::vector<std::vector<InnerPathResult>>& paths) {
  std::vector<std::vector<double>> values(paths.size());
  int flagged = 0;
  for (std::size_t r = 0; r < paths.size(); ++r) {
    for (const auto& res : paths[r]) {
      values[r].push_back(res.value);
      if (res.status != opt::Status::converged) ++flagged;
    }
  }
  BoundEstimate est = detail::summarize(BoundKind::upper, p, cfg, values);
  est.flagged_paths = flagged;
  return est;
}

inline BoundEstimate upper_bound(const ModelParams& p, const ValueGrid& vg, const RunConfig& cfg) {
  return summarize_upper(p, cfg, upper_bound_paths(p, vg, cfg));
}

}  // namespace irdual
