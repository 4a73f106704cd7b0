#include "pdatt/inference.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <stdexcept>

#include "pdatt/errors.hpp"

namespace pdatt {

namespace {

double mean(const VectorXd& v) { return v.size() ? v.sum() / static_cast<double>(v.size()) : 0.0; }
inline double unclamped(double p) { return is_clamped(p) ? 0.0 : 1.0; }

void add_model(std::map<std::string, InfluenceModel>& m, const std::string& name, const MatrixXd& Z,
               const MatrixXd& b) {
  if (b.size() > 0) m[name] = {Z, b};
}

}  // namespace

InfluenceVector linearize(const std::vector<InfluenceTerm>& terms, const std::map<std::string, InfluenceModel>& models) {
  if (terms.empty()) throw std::invalid_argument("linearize: no terms");
  const int n = static_cast<int>(terms.front().w.size());
  InfluenceVector iv;
  iv.psi = VectorXd::Zero(n);
  for (const auto& t : terms) {
    if (t.w.size() != n || t.r.size() != n) throw std::invalid_argument("linearize: dimension mismatch");
    const double c = mean(t.w.cwiseProduct(t.r));
    const VectorXd centred = (t.r.array() - c).matrix();
    iv.psi.array() += t.sign * t.w.array() * centred.array();

    std::set<std::string> keys;
    for (const auto& [k, _] : t.dlogw) keys.insert(k);
    for (const auto& [k, _] : t.dr) keys.insert(k);
    for (const auto& key : keys) {
      auto it = models.find(key);
      if (it == models.end()) throw std::invalid_argument("linearize: no influence for model " + key);
      VectorXd v = VectorXd::Zero(n);
      if (auto g = t.dlogw.find(key); g != t.dlogw.end()) v.array() += g->second.array() * centred.array();
      if (auto g = t.dr.find(key); g != t.dr.end()) v += g->second;
      v.array() *= t.w.array();
      VectorXd G = t.sign * (it->second.Z.transpose() * v) / static_cast<double>(n);
      auto [slot, fresh] = iv.components.try_emplace(key, G);
      if (!fresh) slot->second += G;
    }
  }
  iv.xi = iv.psi;
  for (const auto& [key, G] : iv.components) iv.xi += models.at(key).b * G;
  return iv;
}

namespace {

std::map<std::string, InfluenceModel> nuisance_models(const PanelSample& sample, const InfluenceIngredients& ing) {
  const MatrixXd& X = sample.X();
  std::map<std::string, InfluenceModel> m;
  add_model(m, "delta_d2", X, ing.b_delta_d2);
  add_model(m, "delta_d2p", X, ing.b_delta_d2p);
  add_model(m, "gamma_d1gd2", X, ing.b_gamma_d1gd2);
  add_model(m, "gamma_d1pgd2p", X, ing.b_gamma_d1pgd2p);
  add_model(m, "gamma_d2", X, ing.b_gamma_d2);
  add_model(m, "beta_d", X, ing.b_beta_d);
  add_model(m, "beta_dp", X, ing.b_beta_dp);
  return m;
}

}  // namespace

InfluenceVector influence_robust(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w, double tau_hat,
                                 const InfluenceIngredients& ing) {
  const int n = sample.n();
  const VectorXd A = sample.dy() - nus.mu_dp.fitted;
  const VectorXd B = nus.mu_d.fitted - nus.mu_dp.fitted;
  const auto g = weight_log_derivatives(sample, nus);
  const VectorXd one = VectorXd::Ones(n);

  std::vector<InfluenceTerm> t(4);
  t[0] = {1.0, w.w1, A, g.w1, {{"beta_dp", -one}}};
  t[1] = {-1.0, w.w2, A, g.w2, {{"beta_dp", -one}}};
  t[2] = {1.0, w.w3, B, g.w3, {{"beta_d", one}, {"beta_dp", -one}}};
  t[3] = {-1.0, w.w4, B, g.w4, {{"beta_d", one}, {"beta_dp", -one}}};
  InfluenceVector iv = linearize(t, nuisance_models(sample, ing));
  iv.method = Method::R;
  iv.psi_equiv = (w.w1.array() * (A.array() - tau_hat) - w.w2.array() * A.array() +
                  (w.w3 - w.w4).array() * (B.array() - tau_hat))
                     .matrix();
  return iv;
}

InfluenceVector influence_reduced(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w,
                                  double /*tau_hat*/, const InfluenceIngredients& ing, Flavor flavor) {
  const int n = sample.n();
  const auto g = weight_log_derivatives(sample, nus);
  const VectorXd one = VectorXd::Ones(n);
  std::vector<InfluenceTerm> t;
  InfluenceVector iv;
  switch (flavor) {
    case Flavor::OR:
      t.push_back({1.0, w.w1, sample.dy() - nus.mu_dp.fitted, g.w1, {{"beta_dp", -one}}});
      iv = linearize(t, nuisance_models(sample, ing));
      iv.method = Method::OR;
      break;
    case Flavor::IPW:
      t.push_back({1.0, w.w1, sample.dy(), g.w1, {}});
      t.push_back({-1.0, w.w2, sample.dy(), g.w2, {}});
      iv = linearize(t, nuisance_models(sample, ing));
      iv.method = Method::IPW;
      break;
    case Flavor::DR: {
      const VectorXd A = sample.dy() - nus.mu_dp.fitted;
      t.push_back({1.0, w.w1, A, g.w1, {{"beta_dp", -one}}});
      t.push_back({-1.0, w.w2, A, g.w2, {{"beta_dp", -one}}});
      iv = linearize(t, nuisance_models(sample, ing));
      iv.method = Method::DR;
      break;
    }
    case Flavor::R: throw std::invalid_argument("influence_reduced: use influence_robust for R");
  }
  return iv;
}

VarianceResult variance_of(const InfluenceVector& iv) {
  VarianceResult v;
  const double n = static_cast<double>(iv.xi.size());
  v.omega_hat = iv.xi.squaredNorm() / n;
  v.se = std::sqrt(v.omega_hat / n);
  return v;
}

double normal_critical(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("inference", "confidence level must lie in (0,1)");
  boost::math::normal z;
  return boost::math::quantile(z, 1.0 - (1.0 - level) / 2.0);
}

std::pair<double, double> confidence_interval(double tau_hat, const VarianceResult& var, double level) {
  const double h = normal_critical(level) * var.se;
  return {tau_hat - h, tau_hat + h};
}

// ------------------------------------------------------------- efficiency bound

bool TrueNuisance::complete() const {
  const VectorXd* v[] = {&m_d, &m_dp, &q_d2, &q_d2p, &p_d1gd2, &p_d1pgd2p, &p_d2, &p_d2p};
  for (auto* p : v)
    if (p->size() == 0 || p->size() != m_d.size()) return false;
  return true;
}

TrueNuisance truth_from_fits(const NuisanceSet& nus, double tau) {
  if (!nus.has_propensity || !nus.has_outcome)
    throw ConfigError("inference", "efficiency bound needs propensity and outcome fits");
  TrueNuisance t;
  t.m_d = nus.mu_d.fitted;
  t.m_dp = nus.mu_dp.fitted;
  t.q_d2 = nus.phi_d2.fitted;
  t.q_d2p = nus.phi_d2p.fitted;
  t.p_d1gd2 = nus.pi_d1gd2.fitted;
  t.p_d1pgd2p = nus.pi_d1pgd2p.fitted;
  t.p_d2 = nus.p_d2_of(nus.spec.d.d2);
  t.p_d2p = nus.p_d2_of(0);
  t.tau = tau;
  t.caveat = true;
  return t;
}

VectorXd efficient_influence(const PanelSample& sample, const EstimandSpec& spec, const TrueNuisance& truth) {
  if (!truth.complete() || truth.m_d.size() != sample.n())
    throw ConfigError("inference", "true nuisance functions missing or of the wrong length");
  const int n = sample.n();
  const auto d = spec.d;
  VectorXd a1 = VectorXd::Zero(n), a2 = VectorXd::Zero(n), a3 = VectorXd::Zero(n), a4 = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double p = truth.p_d1gd2(i);
    if (sample.has_path(i, d)) a1(i) = 1.0 / clamp_prob(truth.q_d2(i));
    if (sample.has_path(i, {0, 0}))
      a2(i) = p * truth.p_d2(i) /
              (clamp_prob(truth.p_d1pgd2p(i)) * clamp_prob(truth.p_d2p(i)) * clamp_prob(truth.q_d2p(i)));
    if (sample.d2(i) == d.d2) {
      a3(i) = p;
      if (sample.s(i)) a4(i) = p / clamp_prob(truth.q_d2(i));
    }
  }
  for (VectorXd* a : {&a1, &a2, &a3, &a4}) {
    const double m = mean(*a);
    if (!(m > 0.0)) throw EmptyCellError("efficient influence: empty weight cell");
    *a /= m;
  }
  const VectorXd A = sample.dy() - truth.m_dp;
  const VectorXd B = truth.m_d - truth.m_dp;
  return (a1.array() * (A.array() - truth.tau) - a2.array() * A.array() +
          (a3 - a4).array() * (B.array() - truth.tau))
      .matrix();
}

double seb_estimate(const PanelSample& sample, const EstimandSpec& spec, const TrueNuisance& truth) {
  const VectorXd F = efficient_influence(sample, spec, truth);
  return F.squaredNorm() / static_cast<double>(F.size());
}

// ------------------------------------------------------ inference-robust fits

namespace {

struct Concave {
  std::function<double(const VectorXd&)> value;
  std::function<void(const VectorXd&, VectorXd&, MatrixXd&)> grad_hess;  // H is the negative Hessian
};

// Newton with step-halving; same stopping rules as the logit fits
VectorXd maximize(const Concave& f, VectorXd x, const std::string& what, int& iterations, MatrixXd& neg_hess) {
  const LogitOptions opt;
  double v = f.value(x);
  VectorXd g;
  for (int it = 0; it <= opt.max_iter; ++it) {
    f.grad_hess(x, g, neg_hess);
    Eigen::LDLT<MatrixXd> ldlt(neg_hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
      throw NumericalError("inference", what + ": singular Hessian");
    const VectorXd step = ldlt.solve(g);
    const double gmax = g.cwiseAbs().maxCoeff();
    const double rel = step.cwiseAbs().maxCoeff() / std::max(1.0, x.cwiseAbs().maxCoeff());
    if (gmax < opt.score_tol && rel < opt.coef_tol) {
      iterations = it;
      return x + step;
    }
    if (it == opt.max_iter) break;
    if (rel < kTrustNewton) {
      x += step;
      v = f.value(x);
      continue;
    }
    double t = 1.0;
    VectorXd cand = x + step;
    double vn = f.value(cand);
    int h = 0;
    while (!(vn >= v - 1e-15 * std::abs(v)) && h < opt.max_halvings) {
      t *= 0.5;
      cand = x + t * step;
      vn = f.value(cand);
      ++h;
    }
    if (!(vn >= v - 1e-15 * std::abs(v))) {
      if (gmax < opt.score_tol) {
        iterations = it;
        return x;
      }
      throw NumericalError("inference", what + ": line search failed");
    }
    const bool flat = std::abs(vn - v) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(v));
    x = cand;
    v = vn;
    if (gmax < opt.score_tol && flat) {
      f.grad_hess(x, g, neg_hess);
      iterations = it + 1;
      return x;
    }
    if (x.cwiseAbs().maxCoeff() > opt.separation_bound)
      throw NumericalError("inference", what + ": coefficients diverged (no interior optimum)");
  }
  throw NumericalError("inference", what + ": no convergence in " + std::to_string(opt.max_iter) + " iterations");
}

LogitFit tilted_fit(const MatrixXd& X, const Mask& mask, const VectorXd& coef, int iterations,
                    const MatrixXd& neg_hess) {
  LogitFit f;
  f.coef = coef;
  f.mask = mask;
  f.converged = true;
  f.iterations = iterations;
  f.neg_hessian = neg_hess;
  f.refresh(X);
  return f;
}

// step 5: balance π_{d1|d2}-weighted covariates of S/φ within D2 = d2
LogitFit tilt_delta_d2(const PanelSample& sample, const NuisanceSet& nus, int& iterations) {
  const MatrixXd& X = sample.X();
  const int n = sample.n();
  std::vector<int> rows;
  for (int i = 0; i < n; ++i)
    if (sample.d2(i) == nus.spec.d.d2) rows.push_back(i);
  const double m = static_cast<double>(rows.size());
  Concave f;
  f.value = [&](const VectorXd& b) {
    double s = 0.0;
    for (int i : rows) {
      const double xb = X.row(i).dot(b);
      s += nus.pi_d1gd2.fitted(i) * ((sample.s(i) - 1.0) * xb - sample.s(i) * std::exp(-xb));
    }
    return s / m;
  };
  f.grad_hess = [&](const VectorXd& b, VectorXd& g, MatrixXd& H) {
    g = VectorXd::Zero(b.size());
    H = MatrixXd::Zero(b.size(), b.size());
    for (int i : rows) {
      const double xb = X.row(i).dot(b);
      const double pi = nus.pi_d1gd2.fitted(i);
      const double e = sample.s(i) ? std::exp(-xb) : 0.0;
      g += X.row(i).transpose() * (pi * ((sample.s(i) - 1.0) + sample.s(i) * e));
      if (sample.s(i)) H.noalias() += (pi * e) * X.row(i).transpose() * X.row(i);
    }
    g /= m;
    H /= m;
  };
  MatrixXd H;
  VectorXd coef = maximize(f, nus.phi_d2.coef, "delta_d2 tilting step", iterations, H);
  return tilted_fit(X, sample.d2_mask(nus.spec.d.d2), coef, iterations, H);
}

// step 6: balance w2 against w1 over complete cases
LogitFit tilt_delta_d2p(const PanelSample& sample, const NuisanceSet& nus, int& iterations) {
  const MatrixXd& X = sample.X();
  const int n = sample.n();
  const auto d = nus.spec.d;
  std::vector<int> rows;
  VectorXd ratio = VectorXd::Zero(n), inv_phi = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (!sample.s(i)) continue;
    rows.push_back(i);
    if (sample.has_path(i, {0, 0})) {
      double r = nus.pi_d1gd2.fitted(i) / clamp_prob(nus.pi_d1pgd2p.fitted(i));
      if (d.d2 == 1) r *= nus.pi_d2.fitted(i) / clamp_prob(1.0 - nus.pi_d2.fitted(i));
      ratio(i) = r;
    }
    if (sample.has_path(i, d)) inv_phi(i) = 1.0 / clamp_prob(nus.phi_d2.fitted(i));
  }
  const double m = static_cast<double>(rows.size());
  Concave f;
  f.value = [&](const VectorXd& b) {
    double s = 0.0;
    for (int i : rows) {
      const double xb = X.row(i).dot(b);
      if (ratio(i) != 0.0) s += ratio(i) * (xb - std::exp(-xb));
      s -= inv_phi(i) * xb;
    }
    return s / m;
  };
  f.grad_hess = [&](const VectorXd& b, VectorXd& g, MatrixXd& H) {
    g = VectorXd::Zero(b.size());
    H = MatrixXd::Zero(b.size(), b.size());
    for (int i : rows) {
      double c = -inv_phi(i);
      if (ratio(i) != 0.0) {
        const double e = std::exp(-X.row(i).dot(b));
        c += ratio(i) * (1.0 + e);
        H.noalias() += (ratio(i) * e) * X.row(i).transpose() * X.row(i);
      }
      g += X.row(i).transpose() * c;
    }
    g /= m;
    H /= m;
  };
  MatrixXd H;
  VectorXd coef = maximize(f, nus.phi_d2p.coef, "delta_d2p tilting step", iterations, H);
  return tilted_fit(X, sample.d2_mask(0), coef, iterations, H);
}

// least squares on masked rows with collinear columns dropped by pivoted QR
OlsFit augmented_ols(const VectorXd& y, const MatrixXd& Z, const Mask& mask, const std::vector<std::string>& names,
                     std::vector<std::string>& dropped) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) rows.push_back(static_cast<int>(i));
  const int m = static_cast<int>(rows.size());
  MatrixXd sub(m, Z.cols());
  VectorXd ys(m);
  for (int r = 0; r < m; ++r) {
    sub.row(r) = Z.row(rows[r]);
    ys(r) = y(rows[r]);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
  qr.setThreshold(1e-10);
  const auto& perm = qr.colsPermutation().indices();
  for (int j = static_cast<int>(qr.rank()); j < Z.cols(); ++j) dropped.push_back(names[perm(j)]);
  OlsFit f;
  f.coef = qr.solve(ys);
  f.mask = mask;
  f.gram = sub.transpose() * sub / static_cast<double>(std::max(m, 1));
  f.refresh(Z);
  return f;
}

MatrixXd scaled_block(const MatrixXd& X, const VectorXd& s) { return X.array().colwise() * s.array(); }

}  // namespace

ImprovedFit fit_improved(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache,
                         const ImprovedOptions& opt) {
  ImprovedFit out;
  NuisanceSet& nus = out.nus;
  nus = fit_nuisances(sample, spec, {}, cache);
  const auto d = spec.d;
  const int n = sample.n();
  const int k = sample.k();
  const MatrixXd& X = sample.X();

  // a degenerate group (S ≡ 1) has no interior optimum; keep the constant fit
  if (!nus.phi_d2.degenerate) nus.phi_d2 = tilt_delta_d2(sample, nus, out.delta_d2_iterations);
  if (!nus.phi_d2p.degenerate) nus.phi_d2p = tilt_delta_d2p(sample, nus, out.delta_d2p_iterations);
  if (!opt.augment_outcome) return out;

  // indicator-free weight functions of x, scaled by the Hajek normalizers
  const WeightSet w = compute_weights(sample, nus);
  VectorXd o1(n), o2(n), o3(n), o4(n);
  for (int i = 0; i < n; ++i) {
    const double phi = clamp_prob(nus.phi_d2.fitted(i));
    const double pi = nus.pi_d1gd2.fitted(i);
    double r = pi / (clamp_prob(nus.phi_d2p.fitted(i)) * clamp_prob(nus.pi_d1pgd2p.fitted(i)));
    if (d.d2 == 1) r *= nus.pi_d2.fitted(i) / clamp_prob(1.0 - nus.pi_d2.fitted(i));
    o1(i) = 1.0 / phi / w.raw_denominators[0];
    o2(i) = r / w.raw_denominators[1];
    o3(i) = pi / w.raw_denominators[2];
    o4(i) = pi / phi / w.raw_denominators[3];
  }
  const VectorXd& pi = nus.pi_d1gd2.fitted;
  const VectorXd& pi00 = nus.pi_d1pgd2p.fitted;
  const VectorXd& phi = nus.phi_d2.fitted;

  auto block_names = [&](const std::string& prefix) {
    std::vector<std::string> v;
    for (int j = 0; j < k; ++j) v.push_back(prefix + sample.column_names()[j]);
    return v;
  };

  MatrixXd Xdp(n, 6 * k);
  Xdp << X, scaled_block(X, o2), scaled_block(X, pi.cwiseProduct(o2)), scaled_block(X, pi00.cwiseProduct(o2)),
      scaled_block(X, o1), scaled_block(X, phi.cwiseProduct(o1));
  std::vector<std::string> ndp;
  for (const char* p : {"", "w2*", "pi*w2*", "pi00*w2*", "w1*", "phi*w1*"}) {
    auto b = block_names(std::string("beta_dp:") + p);
    ndp.insert(ndp.end(), b.begin(), b.end());
  }
  nus.mu_dp = augmented_ols(sample.dy(), Xdp, sample.path_mask({0, 0}), ndp, out.dropped_columns);

  MatrixXd Xd(n, 5 * k);
  const VectorXd o34 = pi.cwiseProduct(o3 - o4);
  Xd << X, scaled_block(X, o34), scaled_block(X, o3), scaled_block(X, o4), scaled_block(X, phi.cwiseProduct(o4));
  std::vector<std::string> nd;
  for (const char* p : {"", "pi*(w3-w4)*", "w3*", "w4*", "phi*w4*"}) {
    auto b = block_names(std::string("beta_d:") + p);
    nd.insert(nd.end(), b.begin(), b.end());
  }
  nus.mu_d = augmented_ols(sample.dy(), Xd, sample.path_mask(d), nd, out.dropped_columns);
  return out;
}

double improved_variance(const PanelSample& sample, const NuisanceSet& nus, const WeightSet& w, double tau_hat) {
  const int n = sample.n();
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = sample.dy()(i) - nus.mu_dp.fitted(i);
    const double b = nus.mu_d.fitted(i) - nus.mu_dp.fitted(i);
    const double v = w.w1(i) * (a - tau_hat) - w.w2(i) * a + (w.w3(i) - w.w4(i)) * (b - tau_hat);
    s += v * v;
  }
  return s / n;
}

EstimateResult estimate_robust_improved(const PanelSample& sample, const EstimandSpec& spec, FitCache* cache,
                                        const ImprovedOptions& opt) {
  const ImprovedFit fit = fit_improved(sample, spec, cache, opt);
  const WeightSet w = compute_weights(sample, fit.nus);
  EstimateResult r;
  r.method = Method::R_IMPROVED;
  r.spec = spec;
  r.n = sample.n();
  r.tau_hat = tau_value(sample, fit.nus, w, Flavor::R);
  VarianceResult v;
  v.omega_hat = improved_variance(sample, fit.nus, w, r.tau_hat);
  v.se = std::sqrt(v.omega_hat / r.n);
  r.se = v.se;
  r.ci = confidence_interval(r.tau_hat, v, spec.level);
  r.n_effective = {0, 0, 0, 0};
  const VectorXd* ws[4] = {&w.w1, &w.w2, &w.w3, &w.w4};
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < ws[j]->size(); ++i) r.n_effective[j] += (*ws[j])(i) != 0.0;
  r.diagnostics["omega_hat"] = v.omega_hat;
  r.diagnostics["dropped_columns"] = static_cast<double>(fit.dropped_columns.size());
  r.diagnostics["iter_delta_d2"] = fit.delta_d2_iterations;
  r.diagnostics["iter_delta_d2p"] = fit.delta_d2p_iterations;
  if (!fit.dropped_columns.empty())
    r.notes.push_back("dropped " + std::to_string(fit.dropped_columns.size()) + " collinear augmentation columns");
  return r;
}

}  // namespace pdatt
