#include "pdatt/estimators.hpp"

#include <algorithm>
#include <sstream>

#include "pdatt/errors.hpp"
#include "pdatt/inference.hpp"

namespace pdatt {

namespace {

const std::vector<std::pair<Method, std::string>>& method_table() {
  static const std::vector<std::pair<Method, std::string>> t = {
      {Method::R, "R"},           {Method::OR, "OR"},         {Method::IPW, "IPW"},
      {Method::DR, "DR"},         {Method::CC_OR, "CC-OR"},   {Method::CC_IPW, "CC-IPW"},
      {Method::CC_DR, "CC-DR"},   {Method::NAIVE, "NAIVE"},   {Method::WEAK_MAR_IPW, "WEAK-MAR-IPW"},
      {Method::R_IMPROVED, "R-IMPROVED"}};
  return t;
}

double mean(const VectorXd& v) { return v.size() ? v.sum() / static_cast<double>(v.size()) : 0.0; }

void normalize(VectorXd& a, double& denom, const char* name) {
  denom = mean(a);
  if (!(denom > 0.0)) throw EmptyCellError(std::string("weight ") + name + " has a zero normalizer");
  a /= denom;
}

int nonzero(const VectorXd& v) {
  int c = 0;
  for (int i = 0; i < v.size(); ++i) c += v(i) != 0.0;
  return c;
}

inline double unclamped(double p) { return is_clamped(p) ? 0.0 : 1.0; }

// π_{d2}(x)/π_{d2'}(x) with d2' = 0; 1 when d2 = 0
double d2_ratio(const NuisanceSet& nus, int i) {
  if (nus.spec.d.d2 == 0) return 1.0;
  const double l = nus.pi_d2.fitted(i);
  return l / clamp_prob(1.0 - l);
}

Flavor flavor_of(Method m) {
  switch (m) {
    case Method::OR:
    case Method::CC_OR: return Flavor::OR;
    case Method::IPW:
    case Method::CC_IPW: return Flavor::IPW;
    case Method::DR:
    case Method::CC_DR: return Flavor::DR;
    default: return Flavor::R;
  }
}

NuisanceOptions options_for(Flavor f, bool complete_case) {
  NuisanceOptions o;
  o.complete_case = complete_case;
  o.need_propensity = f != Flavor::OR;
  o.need_outcome = f != Flavor::IPW;
  return o;
}

void fill_ci(EstimateResult& r, const VarianceResult& v) {
  r.se = v.se;
  r.ci = confidence_interval(r.tau_hat, v, r.spec.level);
  r.diagnostics["omega_hat"] = v.omega_hat;
}

}  // namespace

std::string method_tag(Method m) {
  for (const auto& [k, v] : method_table())
    if (k == m) return v;
  return "?";
}

Method parse_method(const std::string& tag) {
  std::string t = tag;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return c == '_' ? '-' : std::toupper(c); });
  for (const auto& [k, v] : method_table())
    if (v == t) return k;
  throw ConfigError("estimators", "unknown estimator tag '" + tag + "'");
}

std::vector<Method> parse_methods(const std::string& csv_tags) {
  std::vector<Method> out;
  std::stringstream ss(csv_tags);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(parse_method(item));
  }
  if (out.empty()) throw ConfigError("estimators", "empty estimator list");
  return out;
}

WeightSet compute_weights(const PanelSample& sample, const NuisanceSet& nus) {
  const int n = sample.n();
  const auto d = nus.spec.d;
  WeightSet w;
  w.w1 = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (sample.has_path(i, d)) w.w1(i) = 1.0 / clamp_prob(nus.phi_d2.fitted(i));
  normalize(w.w1, w.raw_denominators[0], "w1");
  if (!nus.has_propensity) return w;

  w.w2 = VectorXd::Zero(n);
  w.w3 = VectorXd::Zero(n);
  w.w4 = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double pi = nus.pi_d1gd2.fitted(i);
    if (sample.has_path(i, {0, 0}))
      w.w2(i) = pi * d2_ratio(nus, i) /
                (clamp_prob(nus.phi_d2p.fitted(i)) * clamp_prob(nus.pi_d1pgd2p.fitted(i)));
    if (sample.d2(i) == d.d2) {
      w.w3(i) = pi;
      if (sample.s(i)) w.w4(i) = pi / clamp_prob(nus.phi_d2.fitted(i));
    }
  }
  normalize(w.w2, w.raw_denominators[1], "w2");
  normalize(w.w3, w.raw_denominators[2], "w3");
  normalize(w.w4, w.raw_denominators[3], "w4");
  return w;
}

WeightDerivatives weight_log_derivatives(const PanelSample& sample, const NuisanceSet& nus) {
  const int n = sample.n();
  WeightDerivatives g;
  VectorXd dphi(n);
  for (int i = 0; i < n; ++i) {
    const double p = nus.phi_d2.fitted(i);
    dphi(i) = -(1.0 - p) * unclamped(p);
  }
  g.w1["delta_d2"] = dphi;
  if (!nus.has_propensity) return g;

  VectorXd dphip(n), dpi(n), dpi00(n), dd2(n);
  for (int i = 0; i < n; ++i) {
    const double pp = nus.phi_d2p.fitted(i);
    dphip(i) = -(1.0 - pp) * unclamped(pp);
    dpi(i) = 1.0 - nus.pi_d1gd2.fitted(i);
    const double p00 = nus.pi_d1pgd2p.fitted(i);
    dpi00(i) = -(1.0 - p00) * unclamped(p00);
    const double l = nus.pi_d2.fitted(i);
    dd2(i) = (1.0 - l) + l * unclamped(1.0 - l);
  }
  g.w2["delta_d2p"] = dphip;
  g.w2["gamma_d1gd2"] = dpi;
  g.w2["gamma_d1pgd2p"] = dpi00;
  if (nus.spec.d.d2 == 1) g.w2["gamma_d2"] = dd2;
  g.w3["gamma_d1gd2"] = dpi;
  g.w4["gamma_d1gd2"] = dpi;
  g.w4["delta_d2"] = dphi;
  return g;
}

double tau_value(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w, Flavor f) {
  const VectorXd& dy = sample.dy();
  switch (f) {
    case Flavor::IPW: return mean(w.w1.cwiseProduct(dy)) - mean(w.w2.cwiseProduct(dy));
    case Flavor::OR: return mean(w.w1.cwiseProduct(dy - nus.mu_dp.fitted));
    case Flavor::DR: {
      VectorXd A = dy - nus.mu_dp.fitted;
      return mean(w.w1.cwiseProduct(A)) - mean(w.w2.cwiseProduct(A));
    }
    case Flavor::R: return decompose(sample, nus, w).total();
  }
  return 0.0;
}

Decomposition decompose(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w) {
  const VectorXd& dy = sample.dy();
  const VectorXd B = nus.mu_d.fitted - nus.mu_dp.fitted;
  Decomposition t;
  t.I = mean(w.w1.cwiseProduct(dy));
  t.II = mean(w.w1.cwiseProduct(nus.mu_dp.fitted));
  t.III = mean(w.w2.cwiseProduct(dy));
  t.IV = mean(w.w2.cwiseProduct(nus.mu_dp.fitted));
  t.V = mean(w.w3.cwiseProduct(B));
  t.VI = mean(w.w4.cwiseProduct(B));
  return t;
}

EstimateResult estimate_with_fits(const PanelSample& sample, const NuisanceSet& nus, Flavor f, Method tag) {
  const WeightSet w = compute_weights(sample, nus);
  EstimateResult r;
  r.method = tag;
  r.spec = nus.spec;
  r.n = sample.n();
  r.tau_hat = tau_value(sample, nus, w, f);
  const auto ing = influence_ingredients(sample, nus);
  const InfluenceVector iv = f == Flavor::R ? influence_robust(sample, nus, w, r.tau_hat, ing)
                                            : influence_reduced(sample, nus, w, r.tau_hat, ing, f);
  fill_ci(r, variance_of(iv));
  r.diagnostics["psi_omega"] = iv.psi.squaredNorm() / sample.n();

  const VectorXd* ws[4] = {&w.w1, &w.w2, &w.w3, &w.w4};
  double wmax = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (ws[k]->size() == 0) continue;
    r.n_effective[k] = nonzero(*ws[k]);
    wmax = std::max(wmax, ws[k]->maxCoeff());
  }
  r.diagnostics["max_weight"] = wmax;

  // smallest fitted divisor probability and how many hit the clamp
  double pmin = 1.0;
  int clamped = 0;
  auto scan = [&](const LogitFit& fit) {
    if (fit.fitted.size() == 0) return;
    for (int i = 0; i < fit.fitted.size(); ++i) {
      pmin = std::min(pmin, fit.fitted(i));
      clamped += fit.fitted(i) < kProbClamp;
    }
  };
  if (!nus.complete_case) {
    scan(nus.phi_d2);
    if (nus.has_propensity) scan(nus.phi_d2p);
  }
  if (nus.has_propensity) scan(nus.pi_d1pgd2p);
  r.diagnostics["min_divisor_prob"] = pmin;
  r.diagnostics["clamped"] = clamped;
  for (const auto& [k, v] : nus.iterations()) r.diagnostics["iter_" + k] = v;
  return r;
}

EstimateResult estimate_robust(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache) {
  return estimate_with_fits(sample, fit_nuisances(sample, spec, options_for(Flavor::R, false), cache), Flavor::R,
                            Method::R);
}

EstimateResult estimate_or(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache) {
  return estimate_with_fits(sample, fit_nuisances(sample, spec, options_for(Flavor::OR, false), cache),
                            Flavor::OR, Method::OR);
}

EstimateResult estimate_ipw(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache) {
  return estimate_with_fits(sample, fit_nuisances(sample, spec, options_for(Flavor::IPW, false), cache),
                            Flavor::IPW, Method::IPW);
}

EstimateResult estimate_dr(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache) {
  return estimate_with_fits(sample, fit_nuisances(sample, spec, options_for(Flavor::DR, false), cache),
                            Flavor::DR, Method::DR);
}

EstimateResult estimate_cc(const PanelSample& sample, const EstimandSpec& spec, Flavor f) {
  if (f == Flavor::R) throw ConfigError("estimators", "complete-case flavor must be OR, IPW or DR");
  const PanelSample cc = sample.subset(sample.observed_mask());
  if (cc.n() == 0) throw EmptyCellError("no complete cases");
  const Method tag = f == Flavor::OR ? Method::CC_OR : (f == Flavor::IPW ? Method::CC_IPW : Method::CC_DR);
  auto r = estimate_with_fits(cc, fit_nuisances(cc, spec, options_for(f, true)), f, tag);
  r.diagnostics["n_full"] = sample.n();
  return r;
}

EstimateResult estimate_naive_prepost(const PanelSample& sample, double level) {
  const Mask m1 = sample.d2_mask(1), m0 = sample.d2_mask(0);
  if (count(m1) == 0) throw EmptyCellError("no observations with D2=1");
  if (count(m0) == 0) throw EmptyCellError("no observations with D2=0");
  const OlsFit mu1 = fit_ols(sample.dy(), sample, m1);
  const OlsFit mu0 = fit_ols(sample.dy(), sample, m0);
  const int n = sample.n();

  InfluenceTerm t;
  t.w = sample.d2_vector();
  const double denom = mean(t.w);
  t.w /= denom;
  t.r = mu1.fitted - mu0.fitted;
  t.dr["beta_1"] = VectorXd::Ones(n);
  t.dr["beta_0"] = -VectorXd::Ones(n);
  std::map<std::string, InfluenceModel> models;
  models["beta_1"] = {sample.X(), ols_influence(sample.dy(), sample.X(), mu1)};
  models["beta_0"] = {sample.X(), ols_influence(sample.dy(), sample.X(), mu0)};

  EstimateResult r;
  r.method = Method::NAIVE;
  r.spec.level = level;
  r.n = n;
  r.tau_hat = mean(t.w.cwiseProduct(t.r));
  r.n_effective = {count(m1), count(m0), 0, 0};
  fill_ci(r, variance_of(linearize({t}, models)));
  return r;
}

namespace {

LogitFit fit_q(const PanelSample& sample, const MatrixXd& Zq, int d2) {
  const Mask m = sample.d2_mask(d2);
  const VectorXd s = sample.s_vector();
  try {
    return fit_logit(s, Zq, m);
  } catch (const DegenerateOutcomeError&) {
    for (int i = 0; i < sample.n(); ++i)
      if (m[i] && !sample.s(i)) throw EmptyCellError("no observed D1 among D2=" + std::to_string(d2));
    return constant_logit(sample.n(), static_cast<int>(Zq.cols()), m, true);
  }
}

// extra influence of a 1/q-weighted logit through the estimated q
MatrixXd weighted_logit_q_term(const VectorXd& y, const MatrixXd& X, const LogitFit& pi, const MatrixXd& Zq,
                               const LogitFit& q, const MatrixXd& b_q) {
  const int n = static_cast<int>(X.rows());
  const double m = count(pi.mask);
  MatrixXd J = MatrixXd::Zero(X.cols(), Zq.cols());
  for (int i = 0; i < n; ++i) {
    if (!pi.mask[i]) continue;
    const double qi = q.fitted(i);
    const double dw = -(1.0 - qi) * unclamped(qi) / clamp_prob(qi);
    J.noalias() += X.row(i).transpose() * (dw * (y(i) - pi.fitted(i))) * Zq.row(i);
  }
  J /= n;
  Eigen::LDLT<MatrixXd> ldlt(pi.neg_hessian * (m / n));
  return ldlt.solve(J * b_q.transpose()).transpose();
}

}  // namespace

EstimateResult estimate_weak_mar_ipw(const PanelSample& sample, const EstimandSpec& spec) {
  spec.validate();
  const auto d = spec.d;
  const int n = sample.n();
  const int k = sample.k();
  const MatrixXd& X = sample.X();
  // a constant ΔY is collinear with the intercept and carries no selection
  const bool dy_varies = sample.dy().maxCoeff() > sample.dy().minCoeff();
  MatrixXd Zq(n, k + dy_varies);
  if (dy_varies) Zq << X, sample.dy();
  else Zq = X;

  for (const auto& [m, cell] : {std::pair{sample.path_mask(d), "S=1,D=" + d.label()},
                                std::pair{sample.path_mask({0, 0}), std::string("S=1,D=00")}})
    if (count(m) == 0) throw EmptyCellError("no observations in cell " + cell);

  const LogitFit q_d2 = fit_q(sample, Zq, d.d2);
  const LogitFit q_d2p = d.d2 == 0 ? q_d2 : fit_q(sample, Zq, 0);
  VectorXd wq = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (sample.d2(i) == d.d2) wq(i) = 1.0 / clamp_prob(q_d2.fitted(i));
    else if (sample.d2(i) == 0) wq(i) = 1.0 / clamp_prob(q_d2p.fitted(i));
  }

  const auto t = nuisance_targets(sample, spec);
  NuisanceSet nus;
  nus.spec = spec;
  auto one_class = [](const std::string& key, auto&& f) {
    try {
      return f();
    } catch (const DegenerateOutcomeError& e) {
      throw EmptyCellError(key + ": " + e.what());
    }
  };
  nus.pi_d1gd2 = one_class("pi|D1=" + std::to_string(d.d1) + ",D2=" + std::to_string(d.d2),
                           [&] { return fit_logit(t.d1_is_d1, X, sample.observed_d2_mask(d.d2), &wq); });
  nus.pi_d1pgd2p =
      one_class("pi|D1=0,D2=0", [&] { return fit_logit(t.d1_is_0, X, sample.observed_d2_mask(0), &wq); });
  nus.pi_d2 = one_class("pi|D2", [&] { return fit_logit(t.d2_is_1, X, Mask(n, 1)); });

  InfluenceTerm t1, t2;
  t1.w = VectorXd::Zero(n);
  t2.w = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (sample.has_path(i, d)) t1.w(i) = 1.0 / clamp_prob(q_d2.fitted(i));
    if (sample.has_path(i, {0, 0}))
      t2.w(i) = nus.pi_d1gd2.fitted(i) * d2_ratio(nus, i) /
                (clamp_prob(nus.pi_d1pgd2p.fitted(i)) * clamp_prob(q_d2p.fitted(i)));
  }
  double den1 = 0, den2 = 0;
  normalize(t1.w, den1, "w1");
  normalize(t2.w, den2, "w2");
  t1.r = t2.r = sample.dy();
  t2.sign = -1.0;

  VectorXd gq(n), gqp(n), gpi(n), gpi00(n), gd2(n);
  for (int i = 0; i < n; ++i) {
    gq(i) = -(1.0 - q_d2.fitted(i)) * unclamped(q_d2.fitted(i));
    gqp(i) = -(1.0 - q_d2p.fitted(i)) * unclamped(q_d2p.fitted(i));
    gpi(i) = 1.0 - nus.pi_d1gd2.fitted(i);
    const double p00 = nus.pi_d1pgd2p.fitted(i);
    gpi00(i) = -(1.0 - p00) * unclamped(p00);
    const double l = nus.pi_d2.fitted(i);
    gd2(i) = (1.0 - l) + l * unclamped(1.0 - l);
  }
  t1.dlogw["q_d2"] = gq;
  t2.dlogw["q_d2p"] = gqp;
  t2.dlogw["gamma_d1gd2"] = gpi;
  t2.dlogw["gamma_d1pgd2p"] = gpi00;
  if (d.d2 == 1) t2.dlogw["gamma_d2"] = gd2;

  const VectorXd s = sample.s_vector();
  std::map<std::string, InfluenceModel> models;
  models["q_d2"] = {Zq, logit_influence(s, Zq, q_d2)};
  models["q_d2p"] = {Zq, logit_influence(s, Zq, q_d2p)};
  MatrixXd b_pi = logit_influence(t.d1_is_d1, X, nus.pi_d1gd2);
  b_pi += weighted_logit_q_term(t.d1_is_d1, X, nus.pi_d1gd2, Zq, q_d2, models["q_d2"].b);
  MatrixXd b_pi00 = logit_influence(t.d1_is_0, X, nus.pi_d1pgd2p);
  b_pi00 += weighted_logit_q_term(t.d1_is_0, X, nus.pi_d1pgd2p, Zq, q_d2p, models["q_d2p"].b);
  models["gamma_d1gd2"] = {X, b_pi};
  models["gamma_d1pgd2p"] = {X, b_pi00};
  models["gamma_d2"] = {X, logit_influence(t.d2_is_1, X, nus.pi_d2)};

  EstimateResult r;
  r.method = Method::WEAK_MAR_IPW;
  r.spec = spec;
  r.n = n;
  r.tau_hat = mean(t1.w.cwiseProduct(t1.r)) - mean(t2.w.cwiseProduct(t2.r));
  r.n_effective = {nonzero(t1.w), nonzero(t2.w), 0, 0};
  fill_ci(r, variance_of(linearize({t1, t2}, models)));
  r.diagnostics["q_dy_coef_d2"] = dy_varies ? q_d2.coef(k) : 0.0;
  r.diagnostics["q_dy_coef_d2p"] = dy_varies ? q_d2p.coef(k) : 0.0;
  return r;
}

EstimateResult estimate(const PanelSample& sample, const EstimandSpec& spec, Method m, FitCache* cache) {
  switch (m) {
    case Method::R: return estimate_robust(sample, spec, cache);
    case Method::OR: return estimate_or(sample, spec, cache);
    case Method::IPW: return estimate_ipw(sample, spec, cache);
    case Method::DR: return estimate_dr(sample, spec, cache);
    case Method::CC_OR:
    case Method::CC_IPW:
    case Method::CC_DR: return estimate_cc(sample, spec, flavor_of(m));
    case Method::NAIVE: return estimate_naive_prepost(sample, spec.level);
    case Method::WEAK_MAR_IPW: return estimate_weak_mar_ipw(sample, spec);
    case Method::R_IMPROVED: return estimate_robust_improved(sample, spec, cache);
  }
  throw ConfigError("estimators", "unhandled method");
}

BoundsResult partial_id_bounds(const PanelSample& sample, double y_min) {
  if (!sample.y2()) throw DataError("estimators", "bounds need the raw y2 column (map it in the schema)");
  const auto naive = estimate_naive_prepost(sample);
  const Mask m0 = sample.d2_mask(0);
  const OlsFit y2_0 = fit_ols(*sample.y2(), sample, m0);
  const VectorXd d2 = sample.d2_vector();
  BoundsResult b;
  b.y_min = y_min;
  b.lower = naive.tau_hat;
  b.upper = b.lower + d2.dot(y2_0.fitted) / d2.sum() - y_min;
  if (b.upper < b.lower)
    throw DataError("estimators", "y_min exceeds the regression-adjusted mean of y2 among D2=0");
  return b;
}

double aggregate_second_period(const EstimateResult& r11, const EstimateResult& r01, const PanelSample& sample) {
  if (!(r11.spec.d == TreatmentPath{1, 1}) || !(r01.spec.d == TreatmentPath{0, 1}))
    throw ConfigError("estimators", "aggregation needs the 11-00 and 01-00 estimates");
  const EstimandSpec s11 = spec_from_label("11");
  const auto t = nuisance_targets(sample, s11);
  const Mask obs = sample.observed_d2_mask(1);
  if (count(obs) == 0) throw EmptyCellError("no observed D1 among D2=1");
  LogitFit pi;
  try {
    pi = fit_logit(t.d1_is_d1, sample, obs);
  } catch (const DegenerateOutcomeError&) {
    // every observed D2=1 unit shares one D1 value
    pi.fitted = VectorXd::Constant(sample.n(), t.d1_is_d1(std::find(obs.begin(), obs.end(), 1) - obs.begin()));
  }
  double p = 0.0;
  int m = 0;
  for (int i = 0; i < sample.n(); ++i)
    if (sample.d2(i) == 1) {
      p += pi.fitted(i);
      ++m;
    }
  if (m == 0) throw EmptyCellError("no observations with D2=1");
  p /= m;
  return r11.tau_hat * p + r01.tau_hat * (1.0 - p);
}

}  // namespace pdatt
