#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pdatt/first_stage.hpp"

namespace pdatt {

enum class Method { R, OR, IPW, DR, CC_OR, CC_IPW, CC_DR, NAIVE, WEAK_MAR_IPW, R_IMPROVED };
enum class Flavor { R, OR, IPW, DR };

std::string method_tag(Method m);
Method parse_method(const std::string& tag);  // ConfigError on unknown tags
std::vector<Method> parse_methods(const std::string& csv_tags);

struct WeightSet {
  VectorXd w1, w2, w3, w4;  // w2..w4 empty when propensities were not fitted
  std::array<double, 4> raw_denominators{};
};

// ∂ log a_k,i / ∂η = g_i · x_i for each weight k and model η; entries are 0
// where the divisor probability was clamped
struct WeightDerivatives {
  std::map<std::string, VectorXd> w1, w2, w3, w4;
};

struct EstimateResult {
  double tau_hat = 0.0;
  double se = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
  Method method = Method::R;
  EstimandSpec spec;
  int n = 0;
  std::array<int, 4> n_effective{};
  std::map<std::string, double> diagnostics;
  std::vector<std::string> notes;
};

struct BoundsResult {
  double lower = 0.0;
  double upper = 0.0;
  double y_min = 0.0;
};

WeightSet compute_weights(const PanelSample& sample, const NuisanceSet& nus);
WeightDerivatives weight_log_derivatives(const PanelSample& sample, const NuisanceSet& nus);

// point value of a flavor's formula on given fits and weights
double tau_value(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w, Flavor f);

// the six terms (I)..(VI) of the robust decomposition, sample means
struct Decomposition {
  double I = 0, II = 0, III = 0, IV = 0, V = 0, VI = 0;
  double total() const { return I - II - III + IV + V - VI; }
};
Decomposition decompose(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w);

// full pipeline on already-fitted nuisances: weights, point estimate,
// influence-function se and ci
EstimateResult estimate_with_fits(const PanelSample& sample, const NuisanceSet& nus, Flavor f, Method tag);

EstimateResult estimate_robust(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache = nullptr);
EstimateResult estimate_or(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache = nullptr);
EstimateResult estimate_ipw(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache = nullptr);
EstimateResult estimate_dr(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache = nullptr);
EstimateResult estimate_cc(const PanelSample& sample, const EstimandSpec& spec, Flavor f);
EstimateResult estimate_naive_prepost(const PanelSample& sample, double level = 0.95);
EstimateResult estimate_weak_mar_ipw(const PanelSample& sample, const EstimandSpec& spec);

// any method by tag (R-IMPROVED routes to the inference module)
EstimateResult estimate(const PanelSample& sample, const EstimandSpec& spec, Method m, FitCache* cache = nullptr);

BoundsResult partial_id_bounds(const PanelSample& sample, double y_min);

// τ11·P̂(D1=1|D2=1) + τ01·P̂(D1=0|D2=1), P̂ averaged from the fitted π_{1|1}
double aggregate_second_period(const EstimateResult& r11, const EstimateResult& r01, const PanelSample& sample);

}  // namespace pdatt
