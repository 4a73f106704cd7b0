#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pdatt/panel_data.hpp"

namespace pdatt {

// divisor clamp for fitted probabilities; raw fitted values stay unclamped
inline constexpr double kProbClamp = 1e-6;
// relative Newton step below which the line search is skipped
inline constexpr double kTrustNewton = 1e-6;
inline double clamp_prob(double p) {
  return p < kProbClamp ? kProbClamp : (p > 1.0 - kProbClamp ? 1.0 - kProbClamp : p);
}
inline bool is_clamped(double p) { return p < kProbClamp || p > 1.0 - kProbClamp; }

inline double logistic(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

struct LogitOptions {
  double score_tol = 1e-8;
  double coef_tol = 1e-10;
  int max_iter = 100;
  int max_halvings = 30;
  double separation_bound = 30.0;
};

struct LogitFit {
  VectorXd coef;
  VectorXd fitted;  // Λ(z·coef) for all n rows
  Mask mask;
  VectorXd weights;  // empty means unit weights
  bool converged = false;
  int iterations = 0;
  MatrixXd neg_hessian;  // subsample mean of w·λ·z z'
  bool degenerate = false;  // one-class outcome replaced by a saturated constant
  std::vector<std::string> trace;

  void refresh(const MatrixXd& Z);  // recompute fitted from coef
};

struct OlsFit {
  VectorXd coef;
  VectorXd fitted;  // z·coef for all n rows
  Mask mask;
  MatrixXd gram;  // subsample mean of z z'

  void refresh(const MatrixXd& Z);
};

// Newton with step-halving on the (optionally weighted) Bernoulli likelihood
// over mask. Throws DegenerateOutcomeError for one-class subsamples and
// NumericalError for separation, singular Hessians or non-convergence.
LogitFit fit_logit(const VectorXd& y, const MatrixXd& Z, const Mask& mask,
                   const VectorXd* weights = nullptr, const LogitOptions& opt = {});
LogitFit fit_logit(const VectorXd& y, const PanelSample& sample, const Mask& mask);

// mean (weighted) log-likelihood and score over the subsample
double logit_loglik(const VectorXd& y, const MatrixXd& Z, const Mask& mask, const VectorXd& coef,
                    const VectorXd* weights = nullptr);
VectorXd logit_score(const VectorXd& y, const MatrixXd& Z, const Mask& mask, const VectorXd& coef,
                     const VectorXd* weights = nullptr);

// saturated constant fit used when the outcome is one-class (S ≡ 1)
LogitFit constant_logit(int n, int k, const Mask& mask, bool all_ones);

OlsFit fit_ols(const VectorXd& y, const MatrixXd& Z, const Mask& mask,
               const std::vector<std::string>* column_names = nullptr);
OlsFit fit_ols(const VectorXd& y, const PanelSample& sample, const Mask& mask);

// Per-observation influence of a fitted coefficient vector, expectations
// replaced by means over all n rows.
MatrixXd logit_influence(const VectorXd& y, const MatrixXd& Z, const LogitFit& fit);
MatrixXd ols_influence(const VectorXd& y, const MatrixXd& Z, const OlsFit& fit);

// Optional per-sample memo of first-stage fits, keyed by model identity.
// Not thread-safe; use one cache per sample per thread.
struct FitCache {
  std::map<std::string, LogitFit> logits;
  std::map<std::string, OlsFit> ols;
};

struct NuisanceOptions {
  bool complete_case = false;     // φ ≡ 1, no missingness fits
  bool need_propensity = true;    // OR skips the π fits and φ_{d2'}
  bool need_outcome = true;       // IPW skips the μ fits
};

// Fits for spec d with d' = (0,0). pi_d2 models P(D2 = 1 | X) on all rows;
// P(D2 = d2 | X) is derived from it (see p_d2_of).
struct NuisanceSet {
  EstimandSpec spec;
  LogitFit phi_d2, phi_d2p;
  LogitFit pi_d1gd2, pi_d1pgd2p;
  LogitFit pi_d2;
  OlsFit mu_d, mu_dp;
  bool complete_case = false;
  bool has_propensity = true;
  bool has_outcome = true;

  VectorXd p_d2_of(int d2) const;  // P(D2 = d2 | X)
  VectorXd pi_d() const;           // π_{d1|d2}·P(D2 = d2)
  VectorXd pi_dp() const;          // π_{0|0}·P(D2 = 0)
  std::map<std::string, int> iterations() const;
};

NuisanceSet fit_nuisances(const PanelSample& sample, const EstimandSpec& spec,
                          const NuisanceOptions& opt = {}, FitCache* cache = nullptr);

// outcome vectors each nuisance was fitted to
struct NuisanceTargets {
  VectorXd s, d1_is_d1, d1_is_0, d2_is_1;
};
NuisanceTargets nuisance_targets(const PanelSample& sample, const EstimandSpec& spec);

struct InfluenceIngredients {
  MatrixXd b_beta_d, b_beta_dp;
  MatrixXd b_gamma_d1gd2, b_gamma_d1pgd2p, b_gamma_d2;
  MatrixXd b_delta_d2, b_delta_d2p;
};

InfluenceIngredients influence_ingredients(const PanelSample& sample, const NuisanceSet& nus);

}  // namespace pdatt
