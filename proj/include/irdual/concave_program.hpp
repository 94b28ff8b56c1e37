#pragma once

// Log-barrier interior-point method for small dense problems
//
//   maximize f(x)  subject to  A x <= b,  x_i >= 0 for i in the nonneg mask,
//
// with f smooth and concave on an open domain. The objective supplies value,
// gradient and Hessian; `value` returns -inf (or NaN) outside its domain and
// the line search backtracks on that.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace irdual::opt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

template <typename F>
concept ConcaveObjective = requires(const F& f, const Vec& x) {
  { f.value(x) } -> std::convertible_to<double>;
  { f.gradient(x) } -> std::convertible_to<Vec>;
  { f.hessian(x) } -> std::convertible_to<Mat>;
};

struct LinearConstraints {
  Mat A;                      ///< r x m
  Vec b;                      ///< r
  std::vector<bool> nonneg;   ///< m entries; true adds x_i >= 0

  int dim() const { return static_cast<int>(nonneg.size()); }

  /// All inequalities stacked as G x <= h (general rows first, then -x_i <= 0).
  void stacked(Mat& G, Vec& h) const {
    const int m = dim();
    int extra = 0;
    for (bool f : nonneg) extra += f ? 1 : 0;
    G.setZero(A.rows() + extra, m);
    h.setZero(A.rows() + extra);
    if (A.rows() > 0) {
      G.topRows(A.rows()) = A;
      h.head(A.rows()) = b;
    }
    int row = static_cast<int>(A.rows());
    for (int i = 0; i < m; ++i) {
      if (nonneg[i]) G(row++, i) = -1.0;
    }
  }

  /// Smallest slack h - G x over all inequalities.
  double min_slack(const Vec& x) const {
    Mat G;
    Vec h;
    stacked(G, h);
    if (G.rows() == 0) return std::numeric_limits<double>::infinity();
    return (h - G * x).minCoeff();
  }
};

enum class Status { converged, max_iter, infeasible };

inline std::string to_string(Status s) {
  switch (s) {
    case Status::converged:
      return "converged";
    case Status::max_iter:
      return "max_iter";
    case Status::infeasible:
      return "infeasible";
  }
  return "unknown";
}

struct Options {
  double tol = 1e-8;        ///< target barrier duality measure (#constraints / t)
  int max_newton = 200;     ///< total Newton steps across all centering phases
  double t0 = 1.0;          ///< initial barrier weight on the objective
  double mu = 20.0;         ///< barrier weight growth factor
  double centering_tol = 1e-9;
  double kkt_tol = 1e-5;    ///< relative stationarity required for `converged`
  bool trace = false;
};

struct TraceEntry {
  double t;
  double f;
  int newton_steps;
};

struct Solution {
  Vec x;
  double f = -std::numeric_limits<double>::infinity();
  /// Relative stationarity residual of the barrier multipliers.
  double kkt_residual = std::numeric_limits<double>::infinity();
  /// Certified bound on f* - f at termination (#constraints / t).
  double gap = std::numeric_limits<double>::infinity();
  int iterations = 0;
  Status status = Status::infeasible;
  /// f at the end of each centering phase.
  std::vector<TraceEntry> trace;
};

namespace detail {

inline bool usable(double v) { return std::isfinite(v); }

}  // namespace detail

/// Maximizes a concave objective over a polyhedron from a strictly feasible start.
template <ConcaveObjective F>
Solution maximize(const F& obj, const LinearConstraints& cons, const Vec& x0, const Options& opt = {}) {
  Solution sol;
  sol.x = x0;
  Mat G;
  Vec h;
  cons.stacked(G, h);
  const int p = static_cast<int>(G.rows());
  const int m = cons.dim();

  Vec s = h - G * x0;
  if (x0.size() != m || (p > 0 && s.minCoeff() <= 0.0) || !detail::usable(obj.value(x0))) {
    sol.status = Status::infeasible;
    return sol;
  }

  if (p == 0) {
    // Unconstrained: plain damped Newton.
    Vec x = x0;
    double fx = obj.value(x);
    int it = 0;
    for (; it < opt.max_newton; ++it) {
      const Vec g = obj.gradient(x);
      const Mat H = -obj.hessian(x);
      const Vec dx = H.ldlt().solve(g);
      const double dec = g.dot(dx);
      if (dec / 2.0 <= opt.tol) break;
      double step = 1.0;
      while (step > 1e-16) {
        const double fn = obj.value(x + step * dx);
        if (detail::usable(fn) && fn >= fx + 0.25 * step * dec) break;
        step *= 0.5;
      }
      x += step * dx;
      fx = obj.value(x);
    }
    sol.x = x;
    sol.f = fx;
    sol.iterations = it;
    sol.gap = 0.0;
    sol.kkt_residual = obj.gradient(x).norm() / std::max(1.0, std::abs(fx));
    sol.status = it < opt.max_newton ? Status::converged : Status::max_iter;
    return sol;
  }

  Vec x = x0;
  double t = opt.t0;
  int newton = 0;
  bool out_of_budget = false;
  double fx = obj.value(x);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  auto residual = [&](const Vec& at, double tt) {
    const Vec nu = (h - G * at).cwiseInverse() / tt;
    const Vec grad_f = obj.gradient(at);
    const Vec stat = grad_f - G.transpose() * nu;
    return stat.lpNorm<Eigen::Infinity>() / std::max(1.0, grad_f.lpNorm<Eigen::Infinity>());
  };
  while (true) {
    // Centering: Newton on t f(x) + sum log(h - G x).
    int steps_here = 0;
    while (true) {
      if (newton >= opt.max_newton) {
        out_of_budget = true;
        break;
      }
      s = h - G * x;
      const Vec inv_s = s.cwiseInverse();
      const Vec grad = t * obj.gradient(x) - G.transpose() * inv_s;
      const Mat negH = -t * obj.hessian(x) + G.transpose() * inv_s.cwiseAbs2().asDiagonal() * G;
      const Eigen::LDLT<Mat> ldlt(negH);
      Vec dx = ldlt.solve(grad);
      if (!dx.allFinite()) dx = negH.completeOrthogonalDecomposition().solve(grad);
      const double dec = grad.dot(dx);
      ++newton;
      ++steps_here;
      if (!(dec > 0.0) || dec / 2.0 <= opt.centering_tol) break;
      // Rounding level of the barrier difference; the line search tolerates it.
      const double noise = 8.0 * eps * (t * std::abs(fx) + s.array().log().abs().sum());

      // Largest step keeping strict feasibility.
      double step = 1.0;
      const Vec Gdx = G * dx;
      for (int i = 0; i < p; ++i) {
        if (Gdx(i) > 0.0) step = std::min(step, 0.99 * s(i) / Gdx(i));
      }
      bool accepted = false;
      while (step > 1e-16) {
        const Vec y = x + step * dx;
        const Vec sy = h - G * y;
        if (sy.minCoeff() > 0.0) {
          const double fy = obj.value(y);
          if (detail::usable(fy)) {
            // Barrier increase in difference form to keep precision at large t.
            const double gain = t * (fy - fx) + (sy.array() / s.array()).log().sum();
            if (gain >= 0.25 * step * dec - noise) {
              x = y;
              fx = fy;
              accepted = true;
              break;
            }
          }
        }
        step *= 0.5;
      }
      if (!accepted) break;  // no progress possible at this precision
    }
    if (opt.trace) sol.trace.push_back({t, fx, steps_here});
    if (out_of_budget) break;
    if (p / t <= opt.tol) break;
    t *= opt.mu;
  }

  sol.x = x;
  sol.f = fx;
  sol.iterations = newton;
  sol.gap = p / t;
  sol.kkt_residual = residual(x, t);
  const bool small_gap = sol.gap <= opt.tol;
  const bool stationary = sol.kkt_residual <= opt.kkt_tol;
  sol.status = (!out_of_budget && small_gap && stationary) ? Status::converged : Status::max_iter;
  return sol;
}

/// Lawson-Hanson nonnegative least squares: min ||E y - f|| s.t. y >= 0.
inline Vec nnls(const Mat& E, const Vec& f, int max_iter = 500) {
  const int n = static_cast<int>(E.cols());
  Vec y = Vec::Zero(n);
  if (n == 0) return y;
  std::vector<bool> passive(n, false);
  Vec w = E.transpose() * (f - E * y);
  const double eps = 1e-12 * std::max(1.0, w.lpNorm<Eigen::Infinity>());
  for (int outer = 0; outer < max_iter; ++outer) {
    int j = -1;
    double wmax = eps;
    for (int i = 0; i < n; ++i) {
      if (!passive[i] && w(i) > wmax) {
        wmax = w(i);
        j = i;
      }
    }
    if (j < 0) break;
    passive[j] = true;
    while (true) {
      std::vector<int> idx;
      for (int i = 0; i < n; ++i)
        if (passive[i]) idx.push_back(i);
      Mat Ep(E.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t c = 0; c < idx.size(); ++c) Ep.col(static_cast<Eigen::Index>(c)) = E.col(idx[c]);
      const Vec zp = Ep.completeOrthogonalDecomposition().solve(f);
      Vec z = Vec::Zero(n);
      for (std::size_t c = 0; c < idx.size(); ++c) z(idx[c]) = zp(static_cast<Eigen::Index>(c));
      bool all_pos = true;
      for (int i : idx)
        if (z(i) <= 0.0) all_pos = false;
      if (all_pos) {
        y = z;
        break;
      }
      double a = 1.0;
      for (int i : idx) {
        if (z(i) <= 0.0) a = std::min(a, y(i) / (y(i) - z(i)));
      }
      y += a * (z - y);
      for (int i : idx) {
        if (y(i) <= 1e-15) {
          passive[i] = false;
          y(i) = 0.0;
        }
      }
    }
    w = E.transpose() * (f - E * y);
  }
  return y;
}

struct KktReport {
  Vec multipliers;  ///< one per stacked inequality (general rows, then nonneg rows)
  double stationarity = 0.0;     ///< ||grad f - G^T nu||_inf
  double complementarity = 0.0;  ///< max_i nu_i * slack_i
  double feasibility_gap = 0.0;  ///< max(0, max_i (G x - h)_i)
  std::vector<int> active;
};

/// KKT residuals at a returned point, with multipliers fitted by NNLS on the
/// constraints whose slack is at most `active_tol`.
template <ConcaveObjective F>
KktReport check_kkt(const Solution& sol, const F& obj, const LinearConstraints& cons, double active_tol = 1e-6) {
  Mat G;
  Vec h;
  cons.stacked(G, h);
  const Vec s = h - G * sol.x;
  const Vec g = obj.gradient(sol.x);
  KktReport r;
  r.multipliers = Vec::Zero(G.rows());
  for (int i = 0; i < G.rows(); ++i)
    if (s(i) <= active_tol) r.active.push_back(i);
  Mat Ga(G.cols(), static_cast<Eigen::Index>(r.active.size()));
  for (std::size_t c = 0; c < r.active.size(); ++c) Ga.col(static_cast<Eigen::Index>(c)) = G.row(r.active[c]).transpose();
  const Vec nu_a = nnls(Ga, g);
  for (std::size_t c = 0; c < r.active.size(); ++c) r.multipliers(r.active[c]) = nu_a(static_cast<Eigen::Index>(c));
  r.stationarity = (g - G.transpose() * r.multipliers).lpNorm<Eigen::Infinity>();
  r.complementarity = 0.0;
  for (int i = 0; i < G.rows(); ++i) r.complementarity = std::max(r.complementarity, std::abs(r.multipliers(i) * s(i)));
  r.feasibility_gap = G.rows() > 0 ? std::max(0.0, (-s).maxCoeff()) : 0.0;
  return r;
}

}  // namespace irdual::opt
