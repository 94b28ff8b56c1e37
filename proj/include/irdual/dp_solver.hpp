#pragma once

// Grid-based backward recursion for the wealth-normalized value J_k(phi) of
// the CRRA consumption/investment problem:
//
//   J_K = (1-alpha)/(1-gamma)
//   J_k(phi) = max_{(pi,c) in A} alpha c^{1-gamma} delta/(1-gamma)
//              + beta^delta E[(R_f + (R - R_f)^T pi - c)^{1-gamma}] E[J_{k+1}(phi') | phi]
//
// Returns are integrated with a tensor Gauss-Hermite rule at the frozen state
// and the next state with a cell-mass discretization on the phi grid; the two
// expectations are taken as independent given phi.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "irdual/concave_program.hpp"
#include "irdual/errors.hpp"
#include "irdual/market_model.hpp"

namespace irdual {

/// Tensor-product Gauss-Hermite rule for a standard normal vector.
struct QuadratureRule {
  Mat nodes;    ///< q^n x n
  Vec weights;  ///< q^n, positive, summing to 1

  int size() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(nodes.cols()); }
};

/// One-dimensional probabilists' Gauss-Hermite rule via Golub-Welsch.
inline QuadratureRule gauss_hermite_1d(int q) {
  Mat jacobi = Mat::Zero(q, q);
  for (int i = 1; i < q; ++i) jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Mat> es(jacobi);
  QuadratureRule r{Mat(q, 1), Vec(q)};
  for (int i = 0; i < q; ++i) {
    r.nodes(i, 0) = es.eigenvalues()(i);
    r.weights(i) = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
  // Exact symmetry about zero.
  for (int i = 0; i < q / 2; ++i) {
    const double x = 0.5 * (r.nodes(q - 1 - i, 0) - r.nodes(i, 0));
    const double w = 0.5 * (r.weights(i) + r.weights(q - 1 - i));
    r.nodes(i, 0) = -x;
    r.nodes(q - 1 - i, 0) = x;
    r.weights(i) = r.weights(q - 1 - i) = w;
  }
  if (q % 2 == 1) r.nodes(q / 2, 0) = 0.0;
  r.weights /= r.weights.sum();
  return r;
}

inline QuadratureRule build_quadrature(int q, int n) {
  if (q != 3 && q != 5 && q != 7) throw InputError("quadrature points per dimension must be 3, 5 or 7");
  if (n < 1 || n > 4) throw InputError("quadrature dimension must be between 1 and 4");
  const QuadratureRule one = gauss_hermite_1d(q);
  int total = 1;
  for (int i = 0; i < n; ++i) total *= q;
  QuadratureRule r{Mat(total, n), Vec(total)};
  std::vector<int> idx(n, 0);
  for (int j = 0; j < total; ++j) {
    double w = 1.0;
    for (int d = 0; d < n; ++d) {
      r.nodes(j, d) = one.nodes(idx[d], 0);
      w *= one.weights(idx[d]);
    }
    r.weights(j) = w;
    for (int d = n - 1; d >= 0; --d) {
      if (++idx[d] < q) break;
      idx[d] = 0;
    }
  }
  return r;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Row-stochastic transition between grid nodes.
struct PhiTransition {
  Mat P;
  bool stage_independent = true;
};

/// Cell-mass discretization of phi' ~ N(phi (1 - lambda delta), state variance)
/// onto the grid. Cells are bounded by midpoints between nodes; the outermost
/// cells extend to +-infinity.
inline PhiTransition build_phi_transition(const std::vector<double>& grid, const ModelParams& p) {
  const int N = static_cast<int>(grid.size());
  if (N < 2) throw InputError("phi grid needs at least two nodes");
  if (!std::is_sorted(grid.begin(), grid.end()) || std::adjacent_find(grid.begin(), grid.end()) != grid.end())
    throw InputError("phi grid must be strictly increasing");
  std::vector<double> edges(N - 1);
  for (int j = 0; j + 1 < N; ++j) edges[j] = 0.5 * (grid[j] + grid[j + 1]);
  const double sd = std::sqrt(p.state_variance());
  PhiTransition t{Mat::Zero(N, N), true};
  for (int i = 0; i < N; ++i) {
    const double mean = grid[i] * (1.0 - p.lambda * p.delta);
    if (sd == 0.0) {
      int nearest = 0;
      for (int j = 1; j < N; ++j)
        if (std::abs(grid[j] - mean) < std::abs(grid[nearest] - mean)) nearest = j;
      t.P(i, nearest) = 1.0;
      continue;
    }
    double prev = 0.0;
    for (int j = 0; j < N; ++j) {
      const double upper = j + 1 < N ? normal_cdf((edges[j] - mean) / sd) : 1.0;
      t.P(i, j) = std::max(0.0, upper - prev);
      prev = upper;
    }
    t.P.row(i) /= t.P.row(i).sum();
  }
  return t;
}

inline std::vector<double> uniform_grid(int nodes, double lo, double hi) {
  if (nodes < 2 || !(hi > lo)) throw InputError("grid needs at least two nodes and hi > lo");
  std::vector<double> g(nodes);
  for (int i = 0; i < nodes; ++i) g[i] = lo + (hi - lo) * i / (nodes - 1);
  return g;
}

/// Approximate value function and policy on the phi grid.
struct ValueGrid {
  std::vector<double> grid;
  Mat J;      ///< (K+1) x |grid|
  Mat slope;  ///< K x |grid|, gradient_J evaluated at the nodes
  std::vector<std::vector<Decision>> policy;  ///< [stage][node]

  int stages() const { return static_cast<int>(policy.size()); }
};

namespace detail {

/// Index i of the segment [grid[i], grid[i+1]] used for phi, clamped to the ends.
inline int segment(const std::vector<double>& g, double phi) {
  const int N = static_cast<int>(g.size());
  const auto it = std::upper_bound(g.begin(), g.end(), phi);
  int i = static_cast<int>(it - g.begin()) - 1;
  return std::clamp(i, 0, N - 2);
}

inline double segment_slope(const std::vector<double>& g, const Mat& J, int k, int i) {
  return (J(k, i + 1) - J(k, i)) / (g[i + 1] - g[i]);
}

}  // namespace detail

/// Piecewise-linear J_k(phi); linear continuation of the boundary segments outside the grid.
inline double interpolate_J(const ValueGrid& vg, int k, double phi) {
  const int i = detail::segment(vg.grid, phi);
  return vg.J(k, i) + detail::segment_slope(vg.grid, vg.J, k, i) * (phi - vg.grid[i]);
}

/// Slope of the piecewise-linear J_k; the average of the two adjacent slopes at an
/// interior node; the boundary segment slope at or beyond the end nodes.
inline double gradient_J(const ValueGrid& vg, int k, double phi) {
  const auto& g = vg.grid;
  const int N = static_cast<int>(g.size());
  if (phi <= g.front()) return detail::segment_slope(g, vg.J, k, 0);
  if (phi >= g.back()) return detail::segment_slope(g, vg.J, k, N - 2);
  const auto hit = std::lower_bound(g.begin(), g.end(), phi);
  if (*hit == phi) {
    const int i = static_cast<int>(hit - g.begin());
    return 0.5 * (detail::segment_slope(g, vg.J, k, i - 1) + detail::segment_slope(g, vg.J, k, i));
  }
  return detail::segment_slope(g, vg.J, k, detail::segment(g, phi));
}

/// Euclidean projection onto {x >= 0, 1^T x <= 1}.
inline Vec project_capped_simplex(const Vec& v) {
  Vec x = v.cwiseMax(0.0);
  if (x.sum() <= 1.0) return x;
  // Projection onto the face 1^T x = 1 (sort-based threshold).
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

/// Projects a decision onto A = {pi >= 0, c >= 0, c <= R_f (1 - 1^T pi)}.
inline Decision project_to_constraint_set(const Decision& a, double Rf) {
  Decision out;
  out.pi = project_capped_simplex(a.pi);
  out.c = std::clamp(a.c, 0.0, std::max(0.0, Rf * (1.0 - out.pi.sum())));
  return out;
}

/// Interpolated nodal policy (nearest node outside the grid), projected onto A.
inline Decision policy_lookup(const ValueGrid& vg, int k, double phi, double Rf) {
  const auto& g = vg.grid;
  const auto& row = vg.policy[k];
  if (phi <= g.front()) return project_to_constraint_set(row.front(), Rf);
  if (phi >= g.back()) return project_to_constraint_set(row.back(), Rf);
  const int i = detail::segment(g, phi);
  const double w = (phi - g[i]) / (g[i + 1] - g[i]);
  Decision a;
  a.pi = (1.0 - w) * row[i].pi + w * row[i + 1].pi;
  a.c = (1.0 - w) * row[i].c + w * row[i + 1].c;
  return project_to_constraint_set(a, Rf);
}

/// Lower-bound (baseline) policy backed by a value grid.
inline FeedbackPolicy grid_policy(const ValueGrid& vg, const ModelParams& p) {
  const double Rf = p.gross_risk_free();
  return [&vg, Rf](int k, double phi, double) { return policy_lookup(vg, k, phi, Rf); };
}

inline constexpr double kDomainGuard = 1e-10;

/// Per-node Bellman objective over x = (pi_1..pi_n, c).
class BellmanObjective {
 public:
  /// `returns` holds one gross-return vector per quadrature node (rows).
  BellmanObjective(const ModelParams& p, Mat returns, Vec weights, double expected_next_J)
      : alpha_(p.alpha), gamma_(p.gamma), delta_(p.delta), Rf_(p.gross_risk_free()), weights_(std::move(weights)),
        coef_(std::pow(p.beta, p.delta) * expected_next_J) {
    const int q = static_cast<int>(returns.rows());
    const int n = static_cast<int>(returns.cols());
    dirs_.resize(q, n + 1);
    dirs_.leftCols(n) = returns.array() - Rf_;
    dirs_.col(n).setConstant(-1.0);
  }

  int dim() const { return static_cast<int>(dirs_.cols()); }

  /// Gross portfolio growth per quadrature node: R_f + (R - R_f)^T pi - c.
  Vec growth(const Vec& x) const { return (dirs_ * x).array() + Rf_; }

  double value(const Vec& x) const {
    const double c = x(dim() - 1);
    const Vec g = growth(x);
    if (g.minCoeff() <= 0.0) return -std::numeric_limits<double>::infinity();
    double v = coef_ * weights_.dot(g.array().pow(1.0 - gamma_).matrix());
    if (alpha_ > 0.0) {
      if (c <= 0.0) return gamma_ > 1.0 ? -std::numeric_limits<double>::infinity() : v;
      v += alpha_ * delta_ * std::pow(c, 1.0 - gamma_) / (1.0 - gamma_);
    }
    return v;
  }

  Vec gradient(const Vec& x) const {
    const Vec g = growth(x);
    const Vec w = (weights_.array() * g.array().pow(-gamma_)).matrix();
    Vec grad = coef_ * (1.0 - gamma_) * (dirs_.transpose() * w);
    if (alpha_ > 0.0) grad(dim() - 1) += alpha_ * delta_ * std::pow(x(dim() - 1), -gamma_);
    return grad;
  }

  Mat hessian(const Vec& x) const {
    const Vec g = growth(x);
    const Vec w = (weights_.array() * g.array().pow(-gamma_ - 1.0)).matrix();
    Mat H = coef_ * (1.0 - gamma_) * (-gamma_) * (dirs_.transpose() * w.asDiagonal() * dirs_);
    if (alpha_ > 0.0) H(dim() - 1, dim() - 1) += -gamma_ * alpha_ * delta_ * std::pow(x(dim() - 1), -gamma_ - 1.0);
    return H;
  }

  /// A plus the domain guards growth >= 1e-10 at every quadrature node.
  opt::LinearConstraints constraints() const {
    const int m = dim(), q = static_cast<int>(dirs_.rows());
    opt::LinearConstraints cons;
    cons.A.setZero(1 + q, m);
    cons.b.setZero(1 + q);
    cons.A.row(0).head(m - 1).setConstant(Rf_);
    cons.A(0, m - 1) = 1.0;
    cons.b(0) = Rf_;
    cons.A.bottomRows(q) = -dirs_;
    cons.b.tail(q).setConstant(Rf_ - kDomainGuard);
    cons.nonneg.assign(m, true);
    return cons;
  }

  /// (eps/n, ..., eps/n, eps) with eps = 1e-3.
  Vec default_start() const {
    const int n = dim() - 1;
    Vec x(dim());
    x.head(n).setConstant(1e-3 / n);
    x(n) = 1e-3;
    return x;
  }

 private:
  double alpha_, gamma_, delta_, Rf_;
  Vec weights_;
  double coef_;
  Mat dirs_;  ///< q x (n+1): rows (R_j - R_f, -1)
};

/// Gross returns at every quadrature node with the state frozen at phi.
inline Mat quadrature_returns(const ModelParams& p, const QuadratureRule& quad, double phi) {
  Mat R(quad.size(), p.n);
  for (int j = 0; j < quad.size(); ++j) R.row(j) = step_return(phi, quad.nodes.row(j).transpose(), p).transpose();
  return R;
}

inline BellmanObjective bellman_objective(const ModelParams& p, const QuadratureRule& quad, double phi,
                                          double expected_next_J) {
  return BellmanObjective(p, quadrature_returns(p, quad, phi), quad.weights, expected_next_J);
}

struct DpOptions {
  opt::Options solver{};
};

/// Backward recursion over the grid; throws NodeSolveError naming (k, phi) on failure.
inline ValueGrid backward_recursion(const ModelParams& p, const std::vector<double>& grid, const QuadratureRule& quad,
                                    const PhiTransition& pt, const DpOptions& options = {}) {
  p.validate();
  if (quad.dim() != p.n) throw InputError("quadrature dimension must equal the asset count");
  const int N = static_cast<int>(grid.size());
  if (pt.P.rows() != N || pt.P.cols() != N) throw InputError("transition matrix does not match the grid");

  ValueGrid vg;
  vg.grid = grid;
  vg.J.resize(p.K + 1, N);
  vg.slope.resize(p.K, N);
  vg.policy.assign(p.K, std::vector<Decision>(N));
  vg.J.row(p.K).setConstant((1.0 - p.alpha) / (1.0 - p.gamma));

  std::vector<Mat> returns(N);
  for (int i = 0; i < N; ++i) returns[i] = quadrature_returns(p, quad, grid[i]);

  for (int k = p.K - 1; k >= 0; --k) {
    const Vec expected_next = pt.P * vg.J.row(k + 1).transpose();
    for (int i = 0; i < N; ++i) {
      const BellmanObjective obj(p, returns[i], quad.weights, expected_next(i));
      const auto cons = obj.constraints();
      const opt::Solution sol = opt::maximize(obj, cons, obj.default_start(), options.solver);
      if (sol.status != opt::Status::converged) throw NodeSolveError(k, grid[i], opt::to_string(sol.status));
      vg.J(k, i) = sol.f;
      Decision a;
      a.pi = sol.x.head(p.n).cwiseMax(0.0);
      a.c = std::max(0.0, sol.x(p.n));
      vg.policy[k][i] = a;
    }
  }
  for (int k = 0; k < p.K; ++k)
    for (int i = 0; i < N; ++i) vg.slope(k, i) = gradient_J(vg, k, grid[i]);
  return vg;
}

struct GridSpec {
  int nodes = 21;
  double lo = -2.0;
  double hi = 2.0;
  int quadrature_points = 3;
};

/// Grid, quadrature and transition from a spec, then the recursion.
inline ValueGrid solve_value_grid(const ModelParams& p, const GridSpec& spec = {}, const DpOptions& options = {}) {
  const auto grid = uniform_grid(spec.nodes, spec.lo, spec.hi);
  const auto quad = build_quadrature(spec.quadrature_points, p.n);
  const auto pt = build_phi_transition(grid, p);
  return backward_recursion(p, grid, quad, pt, options);
}

}  // namespace irdual
