#pragma once

// Discrete-time market with one mean-reverting state variable, n lognormal
// risky assets and a risk-free asset, plus wealth dynamics under a
// (fraction-of-wealth) consumption/investment policy.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "irdual/errors.hpp"

namespace irdual {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

struct ModelParams {
  int n = 3;  ///< risky assets
  int d = 1;  ///< extra state-noise dimension
  Vec mu0;    ///< per-year drift intercept
  Vec mu1;    ///< loading of drift on the market state
  Mat sigma;  ///< lower-triangular volatility, per sqrt(year)
  double r_f = 0.01;
  double lambda = 0.0;  ///< mean-reversion rate
  RowVec sigma_phi1;    ///< state loading on Z (1 x n)
  RowVec sigma_phi2;    ///< state loading on Ztilde (1 x d)
  double alpha = 0.5;   ///< weight of intermediate consumption
  double beta = 1.0;
  double gamma = 1.5;  ///< relative risk aversion
  double delta = 0.1;  ///< period length (years)
  int K = 10;
  double T = 1.0;
  double phi0 = 0.0;
  double W0 = 1.0;

  /// R_f = 1 + r_f * delta (not the exponential).
  double gross_risk_free() const { return 1.0 + r_f * delta; }

  /// Per-period variance of the market state increment.
  double state_variance() const { return (sigma_phi1.squaredNorm() + sigma_phi2.squaredNorm()) * delta; }

  void validate() const {
    if (n < 1 || d < 0) throw InputError("n must be >= 1 and d >= 0");
    if (mu0.size() != n || mu1.size() != n) throw InputError("mu0 and mu1 must have n entries");
    if (sigma.rows() != n || sigma.cols() != n) throw InputError("sigma must be n x n");
    for (int i = 0; i < n; ++i) {
      if (!(sigma(i, i) > 0.0)) throw InputError("sigma must have a strictly positive diagonal");
      for (int j = i + 1; j < n; ++j)
        if (sigma(i, j) != 0.0) throw InputError("sigma must be lower-triangular");
    }
    if (sigma_phi1.size() != n) throw InputError("sigma_phi1 must have n entries");
    if (sigma_phi2.size() != d) throw InputError("sigma_phi2 must have d entries");
    if (!(delta > 0.0)) throw InputError("delta must be positive");
    if (K < 1) throw InputError("K must be at least 1");
    if (std::abs(K * delta - T) > 1e-12) throw InputError("K * delta must equal T");
    if (!(gross_risk_free() > 0.0)) throw InputError("1 + r_f * delta must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in [0, 1]");
    if (!(beta > 0.0)) throw InputError("beta must be positive");
    if (!(gamma > 0.0) || gamma == 1.0) throw InputError("gamma must be positive and different from 1");
    if (!(W0 > 0.0)) throw InputError("W0 must be positive");
  }
};

/// The four published market parameter sets (n = 3, d = 1, T = 1, delta = 0.1).
inline ModelParams parameter_set(int id, double gamma = 1.5) {
  ModelParams p;
  p.n = 3;
  p.d = 1;
  p.r_f = 0.01;
  p.delta = 0.1;
  p.K = 10;
  p.T = 1.0;
  p.alpha = 0.5;
  p.beta = 1.0;
  p.phi0 = 0.0;
  p.W0 = 1.0;
  p.gamma = gamma;
  p.sigma_phi2.resize(1);
  switch (id) {
    case 1:
    case 2:
      p.mu0 = Vec{{0.081, 0.110, 0.130}};
      p.mu1 = Vec{{0.034, 0.059, 0.073}};
      p.sigma = Mat{{0.186, 0.000, 0.000}, {0.228, 0.083, 0.000}, {0.251, 0.139, 0.069}};
      if (id == 1) {
        p.lambda = 0.336;
        p.sigma_phi1 = RowVec{{-0.741, -0.037, -0.060}};
        p.sigma_phi2(0) = 0.284;
      } else {
        p.lambda = 1.671;
        p.sigma_phi1 = RowVec{{-0.017, 0.149, 0.058}};
        p.sigma_phi2(0) = 1.725;
      }
      break;
    case 3:
      p.mu0 = Vec{{0.142, 0.109, 0.089}};
      p.mu1 = Vec{{0.065, 0.049, 0.049}};
      p.sigma = Mat{{0.256, 0.000, 0.000}, {0.217, 0.054, 0.000}, {0.207, 0.062, 0.062}};
      p.lambda = 0.336;
      p.sigma_phi1 = RowVec{{-0.741, -0.040, -0.034}};
      p.sigma_phi2(0) = 0.288;
      break;
    case 4:
      p.mu0 = Vec{{0.142, 0.109, 0.089}};
      p.mu1 = Vec{{0.061, 0.060, 0.067}};
      p.sigma = Mat{{0.256, 0.000, 0.000}, {0.217, 0.054, 0.000}, {0.206, 0.062, 0.062}};
      p.lambda = 1.671;
      p.sigma_phi1 = RowVec{{-0.017, 0.212, 0.096}};
      p.sigma_phi2(0) = 1.716;
      break;
    default:
      throw InputError("unknown parameter set " + std::to_string(id) + " (valid ids: 1, 2, 3, 4)");
  }
  p.validate();
  return p;
}

/// phi_{k+1} = phi_k - lambda phi_k delta + sigma_phi1 z sqrt(delta) + sigma_phi2 ztilde sqrt(delta).
inline double step_state(double phi, const Vec& z, const Vec& ztilde, const ModelParams& p) {
  const double sd = std::sqrt(p.delta);
  return phi - p.lambda * phi * p.delta + p.sigma_phi1.dot(z) * sd + p.sigma_phi2.dot(ztilde) * sd;
}

/// Mean of log R_{k+1} given phi_k: (mu0 + mu1 phi - diag(sigma sigma^T)/2) delta.
inline Vec log_return_mean(double phi, const ModelParams& p) {
  const Vec var = p.sigma.rowwise().squaredNorm();
  return ((p.mu0 + p.mu1 * phi) - 0.5 * var) * p.delta;
}

/// Gross returns R_{k+1} = exp((mu_k - sigma_k^2/2) delta + sigma z sqrt(delta)).
inline Vec step_return(double phi, const Vec& z, const ModelParams& p) {
  return (log_return_mean(phi, p) + p.sigma * z * std::sqrt(p.delta)).array().exp().matrix();
}

/// W_{k+1} = W_k R_f + (R_{k+1} - R_f 1)^T Pi_k - C_k, with Pi and C in wealth units.
inline double step_wealth(double W, const Vec& Pi, double C, const Vec& R_next, const ModelParams& p) {
  const double Rf = p.gross_risk_free();
  return W * Rf + (R_next.array() - Rf).matrix().dot(Pi) - C;
}

/// One draw of the Gaussian drivers: Z is K x n, Ztilde is K x d.
struct ShockPath {
  Mat Z;
  Mat Ztilde;
  bool antithetic = false;  ///< true for the negated partner of a base draw

  ShockPath mirrored() const { return ShockPath{-Z, -Ztilde, !antithetic}; }
};

/// A decision expressed as fractions of current wealth.
struct Decision {
  Vec pi;
  double c = 0.0;
};

/// Membership in {pi >= 0, c >= 0, c <= R_f (1 - 1^T pi)} up to `tol`.
inline bool in_constraint_set(const Decision& a, double Rf, double tol = 1e-9) {
  if ((a.pi.array() < -tol).any()) return false;
  if (a.c < -tol) return false;
  return a.c <= Rf * (1.0 - a.pi.sum()) + tol;
}

/// Policy in feedback form: (stage, market state, wealth) -> decision.
using FeedbackPolicy = std::function<Decision(int, double, double)>;

struct MarketPath {
  std::vector<double> phi;  ///< K+1 states
  std::vector<Vec> R;       ///< K return vectors; R[k] is realized over (k, k+1]
  std::vector<double> W;    ///< K+1 wealth levels
  std::vector<Vec> Pi;      ///< K risky holdings in wealth units
  std::vector<double> C;    ///< K consumption amounts
  std::vector<Decision> decisions;
};

inline constexpr double kWealthFloor = 1e-12;

/// Runs a feedback policy along a shock path; throws AdmissibilityError naming
/// the stage if a decision leaves the constraint set or wealth hits the floor.
inline MarketPath simulate_policy_path(const ModelParams& p, const FeedbackPolicy& policy, const ShockPath& shocks) {
  const double Rf = p.gross_risk_free();
  MarketPath path;
  path.phi.reserve(p.K + 1);
  path.W.reserve(p.K + 1);
  path.phi.push_back(p.phi0);
  path.W.push_back(p.W0);
  for (int k = 0; k < p.K; ++k) {
    const double phi = path.phi.back();
    const double W = path.W.back();
    Decision a = policy(k, phi, W);
    if (a.pi.size() != p.n) throw AdmissibilityError(k, "allocation has wrong dimension");
    if (!in_constraint_set(a, Rf)) throw AdmissibilityError(k, "decision outside the constraint set");
    const Vec z = shocks.Z.row(k).transpose();
    const Vec zt = shocks.Ztilde.row(k).transpose();
    Vec R = step_return(phi, z, p);
    const Vec Pi = W * a.pi;
    const double C = W * a.c;
    const double W_next = step_wealth(W, Pi, C, R, p);
    if (!(W_next > kWealthFloor)) throw AdmissibilityError(k, "wealth is not strictly positive after the step");
    path.Pi.push_back(Pi);
    path.C.push_back(C);
    path.R.push_back(std::move(R));
    path.decisions.push_back(std::move(a));
    path.W.push_back(W_next);
    path.phi.push_back(step_state(phi, z, zt, p));
  }
  return path;
}

/// CRRA utility x^{1-gamma} / (1-gamma).
inline double crra(double x, double gamma) { return std::pow(x, 1.0 - gamma) / (1.0 - gamma); }

/// sum_k alpha beta^{k delta} U(C_k) delta + (1-alpha) beta^{K delta} U(W_K).
inline double path_utility(const ModelParams& p, const std::vector<double>& C, double W_K) {
  double total = 0.0;
  for (int k = 0; k < p.K; ++k) {
    if (p.alpha > 0.0) total += p.alpha * std::pow(p.beta, k * p.delta) * crra(C[k], p.gamma) * p.delta;
  }
  if (p.alpha < 1.0) total += (1.0 - p.alpha) * std::pow(p.beta, p.K * p.delta) * crra(W_K, p.gamma);
  return total;
}

}  // namespace irdual
