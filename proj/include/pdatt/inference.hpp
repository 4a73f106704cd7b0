#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pdatt/estimators.hpp"

namespace pdatt {

struct InfluenceVector {
  VectorXd xi;
  VectorXd psi;        // ξ without the first-stage corrections
  VectorXd psi_equiv;  // τ̂-centred form used by the simplified variance (R only)
  Method method = Method::R;
  // E_n(Ψ_η) per model, i.e. ∂τ̂/∂η
  std::map<std::string, VectorXd> components;
};

struct VarianceResult {
  double omega_hat = 0.0;
  double se = 0.0;
  std::optional<double> seb_hat;
};

// Generic linearization of τ̂ = Σ_k sign_k E_n[w_k r_k] with Hajek weights
// w_k. dlogw and dr hold per-row multipliers g such that the derivative of
// log w_k (resp. r_k) with respect to model η at row i is g_i·z_i.
struct InfluenceTerm {
  double sign = 1.0;
  VectorXd w;
  VectorXd r;
  std::map<std::string, VectorXd> dlogw;
  std::map<std::string, VectorXd> dr;
};

struct InfluenceModel {
  MatrixXd Z;
  MatrixXd b;  // n×k influence of the model's coefficients
};

InfluenceVector linearize(const std::vector<InfluenceTerm>& terms, const std::map<std::string, InfluenceModel>& models);

InfluenceVector influence_robust(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w, double tau_hat,
                                 const InfluenceIngredients& ing);
InfluenceVector influence_reduced(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w,
                                  double tau_hat, const InfluenceIngredients& ing, Flavor flavor);

VarianceResult variance_of(const InfluenceVector& iv);
double normal_critical(double level);  // z_{(1-level)/2}, positive
std::pair<double, double> confidence_interval(double tau_hat, const VarianceResult& var, double level);

// True nuisance functions evaluated per observation. p_d2 and p_d2p are
// P(D2 = d2 | X) and P(D2 = 0 | X).
struct TrueNuisance {
  VectorXd m_d, m_dp;
  VectorXd q_d2, q_d2p;
  VectorXd p_d1gd2, p_d1pgd2p;
  VectorXd p_d2, p_d2p;
  double tau = 0.0;
  bool caveat = false;  // fitted models stood in for the truth
  bool complete() const;
};

// fitted nuisances as stand-ins; sets caveat
TrueNuisance truth_from_fits(const NuisanceSet& nus, double tau);

VectorXd efficient_influence(const PanelSample& sample, const EstimandSpec& spec, const TrueNuisance& truth);
double seb_estimate(const PanelSample& sample, const EstimandSpec& spec, const TrueNuisance& truth);

// Stepwise inference-robust fits: tilted delta_d2 / delta_d2p always. With
// augment_outcome the outcome fits use the extended designs, which
// extrapolate heavy-tailed weight columns off the fitting cell; off by
// default because that inflates the sd several-fold at n = 10^4.
struct ImprovedOptions {
  bool augment_outcome = false;
};

// mu_d / mu_dp carry fitted values of the augmented regressions when
// requested; their coef is then over the kept augmented columns.
struct ImprovedFit {
  NuisanceSet nus;
  std::vector<std::string> dropped_columns;
  int delta_d2_iterations = 0;
  int delta_d2p_iterations = 0;
};

ImprovedFit fit_improved(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache = nullptr,
                         const ImprovedOptions& opt = {});

// V̂ of the stepwise estimator: E_n[ψ²] in its τ̂-centred form
double improved_variance(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w, double tau_hat);

EstimateResult estimate_robust_improved(const PanelSample& sample, const EstimandSpec& spec,
                                        FitCache* cache = nullptr, const ImprovedOptions& opt = {});

}  // namespace pdatt
