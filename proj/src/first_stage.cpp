#include "pdatt/first_stage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pdatt/errors.hpp"

namespace pdatt {

namespace {

std::vector<int> rows_of(const Mask& mask) {
  std::vector<int> r;
  r.reserve(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) r.push_back(static_cast<int>(i));
  return r;
}

// log(1 + e^t) without overflow
inline double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

struct Subsample {
  MatrixXd Z;
  VectorXd y;
  VectorXd w;
};

Subsample gather(const VectorXd& y, const MatrixXd& Z, const std::vector<int>& rows, const VectorXd* weights) {
  Subsample s;
  const int m = static_cast<int>(rows.size());
  s.Z.resize(m, Z.cols());
  s.y.resize(m);
  s.w = VectorXd::Ones(m);
  for (int r = 0; r < m; ++r) {
    s.Z.row(r) = Z.row(rows[r]);
    s.y(r) = y(rows[r]);
    if (weights) s.w(r) = (*weights)(rows[r]);
  }
  return s;
}

double loglik_sub(const Subsample& s, const VectorXd& coef) {
  VectorXd eta = s.Z * coef;
  double ll = 0.0;
  for (int i = 0; i < eta.size(); ++i) ll += s.w(i) * (s.y(i) * eta(i) - log1pexp(eta(i)));
  return ll / eta.size();
}

}  // namespace

void LogitFit::refresh(const MatrixXd& Z) {
  VectorXd eta = Z * coef;
  fitted.resize(eta.size());
  for (int i = 0; i < eta.size(); ++i) fitted(i) = logistic(eta(i));
}

void OlsFit::refresh(const MatrixXd& Z) { fitted = Z * coef; }

double logit_loglik(const VectorXd& y, const MatrixXd& Z, const Mask& mask, const VectorXd& coef,
                    const VectorXd* weights) {
  return loglik_sub(gather(y, Z, rows_of(mask), weights), coef);
}

VectorXd logit_score(const VectorXd& y, const MatrixXd& Z, const Mask& mask, const VectorXd& coef,
                     const VectorXd* weights) {
  auto s = gather(y, Z, rows_of(mask), weights);
  VectorXd r(s.y.size());
  VectorXd eta = s.Z * coef;
  for (int i = 0; i < eta.size(); ++i) r(i) = s.w(i) * (s.y(i) - logistic(eta(i)));
  return s.Z.transpose() * r / static_cast<double>(eta.size());
}

LogitFit fit_logit(const VectorXd& y, const MatrixXd& Z, const Mask& mask, const VectorXd* weights,
                   const LogitOptions& opt) {
  const auto rows = rows_of(mask);
  const int k = static_cast<int>(Z.cols());
  const int m = static_cast<int>(rows.size());
  if (m < k)
    throw NumericalError("first_stage", "logit subsample has " + std::to_string(m) + " rows for " +
                                            std::to_string(k) + " coefficients");
  auto sub = gather(y, Z, rows, weights);
  double ones = 0.0;
  for (int i = 0; i < m; ++i) {
    if (sub.y(i) != 0.0 && sub.y(i) != 1.0) throw DataError("first_stage", "logit outcome must be 0/1");
    ones += sub.y(i);
  }
  if (ones == 0.0 || ones == m)
    throw DegenerateOutcomeError("logit outcome is one-class on its subsample (" + std::to_string(m) + " rows)");

  LogitFit fit;
  fit.mask = mask;
  if (weights) fit.weights = *weights;
  fit.coef = VectorXd::Zero(k);

  struct Step {
    int iter;
    double ll, score;
  };
  std::vector<Step> trace;
  auto fail = [&](const std::string& why) {
    std::ostringstream o;
    o << why << "; trace:";
    for (const auto& t : trace) o << " [it " << t.iter << " ll " << t.ll << " |g| " << t.score << "]";
    throw NumericalError("first_stage", o.str());
  };

  VectorXd eta(m), p(m), r(m), wl(m);
  double ll = loglik_sub(sub, fit.coef);
  MatrixXd H(k, k);
  for (int it = 0; it <= opt.max_iter; ++it) {
    eta.noalias() = sub.Z * fit.coef;
    for (int i = 0; i < m; ++i) {
      p(i) = logistic(eta(i));
      r(i) = sub.w(i) * (sub.y(i) - p(i));
      wl(i) = sub.w(i) * p(i) * (1.0 - p(i));
    }
    VectorXd g = sub.Z.transpose() * r / static_cast<double>(m);
    H.noalias() = sub.Z.transpose() * (sub.Z.array().colwise() * wl.array()).matrix() / static_cast<double>(m);
    const double gmax = g.cwiseAbs().maxCoeff();
    trace.push_back({it, ll, gmax});
    Eigen::LDLT<MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
      fail("singular Hessian");
    VectorXd step = ldlt.solve(g);
    const double rel = step.cwiseAbs().maxCoeff() / std::max(1.0, fit.coef.cwiseAbs().maxCoeff());
    if (gmax < opt.score_tol && rel < opt.coef_tol) {
      fit.coef += step;  // one free quadratic step
      fit.converged = true;
      fit.iterations = it;
      fit.neg_hessian = H;
      break;
    }
    if (it == opt.max_iter) fail("no convergence in " + std::to_string(opt.max_iter) + " iterations");
    // inside the quadratic basin loglik changes sink below its rounding noise
    if (rel < kTrustNewton) {
      fit.coef += step;
      ll = loglik_sub(sub, fit.coef);
      continue;
    }
    double t = 1.0;
    VectorXd cand = fit.coef + step;
    double ll_new = loglik_sub(sub, cand);
    int halvings = 0;
    while (!(ll_new >= ll - 1e-15 * std::abs(ll)) && halvings < opt.max_halvings) {
      t *= 0.5;
      cand = fit.coef + t * step;
      ll_new = loglik_sub(sub, cand);
      ++halvings;
    }
    if (!(ll_new >= ll - 1e-15 * std::abs(ll))) {
      if (gmax < opt.score_tol) {
        fit.converged = true;
        fit.iterations = it;
        fit.neg_hessian = H;
        break;
      }
      fail("line search failed after " + std::to_string(opt.max_halvings) + " halvings");
    }
    fit.coef = cand;
    const bool flat = std::abs(ll_new - ll) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(ll));
    ll = ll_new;
    if (fit.coef.cwiseAbs().maxCoeff() > opt.separation_bound) fail("separation: |coef| exceeded bound");
    // score already small and the objective no longer moves in floating point
    if (gmax < opt.score_tol && flat) {
      fit.converged = true;
      fit.iterations = it + 1;
      fit.neg_hessian = H;
      break;
    }
  }
  fit.refresh(Z);
  return fit;
}

LogitFit fit_logit(const VectorXd& y, const PanelSample& sample, const Mask& mask) {
  return fit_logit(y, sample.X(), mask);
}

LogitFit constant_logit(int n, int k, const Mask& mask, bool all_ones) {
  LogitFit f;
  f.coef = VectorXd::Zero(k);
  f.coef(0) = all_ones ? 30.0 : -30.0;
  f.fitted = VectorXd::Constant(n, logistic(f.coef(0)));
  f.mask = mask;
  f.converged = true;
  f.degenerate = true;
  f.neg_hessian = MatrixXd::Zero(k, k);
  return f;
}

OlsFit fit_ols(const VectorXd& y, const MatrixXd& Z, const Mask& mask, const std::vector<std::string>* names) {
  const auto rows = rows_of(mask);
  const int k = static_cast<int>(Z.cols());
  const int m = static_cast<int>(rows.size());
  auto sub = gather(y, Z, rows, nullptr);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sub.Z);
  if (m < k || qr.rank() < k) {
    std::ostringstream o;
    o << "rank-deficient design (rank " << qr.rank() << " of " << k << ", " << m << " rows); offending columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (int j = static_cast<int>(qr.rank()); j < k; ++j) {
      int c = perm(j);
      o << ' ' << (names && c < static_cast<int>(names->size()) ? (*names)[c] : "#" + std::to_string(c));
    }
    throw NumericalError("first_stage", o.str());
  }
  OlsFit f;
  f.coef = qr.solve(sub.y);
  f.mask = mask;
  f.gram = sub.Z.transpose() * sub.Z / static_cast<double>(m);
  f.refresh(Z);
  return f;
}

OlsFit fit_ols(const VectorXd& y, const PanelSample& sample, const Mask& mask) {
  return fit_ols(y, sample.X(), mask, &sample.column_names());
}

MatrixXd logit_influence(const VectorXd& y, const MatrixXd& Z, const LogitFit& fit) {
  const int n = static_cast<int>(Z.rows());
  const int k = static_cast<int>(Z.cols());
  if (fit.degenerate) return MatrixXd::Zero(n, k);
  const double m = count(fit.mask);
  MatrixXd Hn = fit.neg_hessian * (m / n);
  Eigen::LDLT<MatrixXd> ldlt(Hn);
  if (ldlt.info() != Eigen::Success) throw NumericalError("first_stage", "singular logit bread matrix");
  MatrixXd S = MatrixXd::Zero(n, k);
  const bool w = fit.weights.size() > 0;
  for (int i = 0; i < n; ++i) {
    if (!fit.mask[i]) continue;
    S.row(i) = Z.row(i) * ((w ? fit.weights(i) : 1.0) * (y(i) - fit.fitted(i)));
  }
  return ldlt.solve(S.transpose()).transpose();
}

MatrixXd ols_influence(const VectorXd& y, const MatrixXd& Z, const OlsFit& fit) {
  const int n = static_cast<int>(Z.rows());
  const int k = static_cast<int>(Z.cols());
  const double m = count(fit.mask);
  MatrixXd Gn = fit.gram * (m / n);
  Eigen::LDLT<MatrixXd> ldlt(Gn);
  if (ldlt.info() != Eigen::Success) throw NumericalError("first_stage", "singular OLS bread matrix");
  MatrixXd S = MatrixXd::Zero(n, k);
  for (int i = 0; i < n; ++i) {
    if (!fit.mask[i]) continue;
    S.row(i) = Z.row(i) * (y(i) - fit.fitted(i));
  }
  return ldlt.solve(S.transpose()).transpose();
}

// ---------------------------------------------------------------- nuisances

VectorXd NuisanceSet::p_d2_of(int d2) const {
  if (d2 == 1) return pi_d2.fitted;
  return (1.0 - pi_d2.fitted.array()).matrix();
}

VectorXd NuisanceSet::pi_d() const { return pi_d1gd2.fitted.cwiseProduct(p_d2_of(spec.d.d2)); }
VectorXd NuisanceSet::pi_dp() const { return pi_d1pgd2p.fitted.cwiseProduct(p_d2_of(0)); }

std::map<std::string, int> NuisanceSet::iterations() const {
  return {{"phi_d2", phi_d2.iterations},       {"phi_d2p", phi_d2p.iterations},
          {"pi_d1gd2", pi_d1gd2.iterations},   {"pi_d1pgd2p", pi_d1pgd2p.iterations},
          {"pi_d2", pi_d2.iterations}};
}

NuisanceTargets nuisance_targets(const PanelSample& sample, const EstimandSpec& spec) {
  const int n = sample.n();
  NuisanceTargets t;
  t.s = sample.s_vector();
  t.d2_is_1 = sample.d2_vector();
  t.d1_is_d1 = VectorXd::Zero(n);
  t.d1_is_0 = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (auto d1 = sample.d1(i)) {
      t.d1_is_d1(i) = *d1 == spec.d.d1;
      t.d1_is_0(i) = *d1 == 0;
    }
  }
  return t;
}

namespace {

template <class F>
auto annotate(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const DegenerateOutcomeError&) {
    throw;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Numerical) throw NumericalError("first_stage", what + ": " + e.what());
    if (e.kind() == ErrorKind::Data) throw DataError("first_stage", what + ": " + e.what());
    throw;
  }
}

void require_cell(const Mask& m, const std::string& cell) {
  if (count(m) == 0) throw EmptyCellError("no observations in cell " + cell);
}

}  // namespace

NuisanceSet fit_nuisances(const PanelSample& sample, const EstimandSpec& spec, const NuisanceOptions& opt,
                          FitCache* cache) {
  spec.validate();
  const auto& d = spec.d;
  const int n = sample.n();
  const int k = sample.k();
  const auto t = nuisance_targets(sample, spec);

  const Mask m_d2 = sample.d2_mask(d.d2);
  const Mask m_d2p = sample.d2_mask(0);
  const Mask m_obs_d2 = sample.observed_d2_mask(d.d2);
  const Mask m_obs_d2p = sample.observed_d2_mask(0);
  const Mask m_all(n, 1);
  const Mask m_path_d = sample.path_mask(d);
  const Mask m_path_dp = sample.path_mask({0, 0});

  require_cell(m_d2, "D2=" + std::to_string(d.d2));
  require_cell(m_d2p, "D2=0");
  require_cell(m_obs_d2, "S=1,D2=" + std::to_string(d.d2));
  require_cell(m_obs_d2p, "S=1,D2=0");
  require_cell(m_path_d, "S=1,D=(" + std::to_string(d.d1) + "," + std::to_string(d.d2) + ")");
  require_cell(m_path_dp, "S=1,D=(0,0)");

  auto logit = [&](const std::string& key, const VectorXd& y, const Mask& m) -> LogitFit {
    if (cache) {
      auto it = cache->logits.find(key);
      if (it != cache->logits.end()) return it->second;
    }
    LogitFit f = annotate(key, [&] { return fit_logit(y, sample.X(), m); });
    if (cache) cache->logits.emplace(key, f);
    return f;
  };
  auto phi = [&](int d2, const Mask& m) -> LogitFit {
    const std::string key = "phi|D2=" + std::to_string(d2);
    try {
      return logit(key, t.s, m);
    } catch (const DegenerateOutcomeError&) {
      bool all_ones = true;
      for (int i = 0; i < n; ++i)
        if (m[i] && t.s(i) == 0.0) all_ones = false;
      if (!all_ones) throw EmptyCellError("no observed D1 among D2=" + std::to_string(d2));
      return constant_logit(n, k, m, true);
    }
  };
  auto ols = [&](const std::string& key, const Mask& m) -> OlsFit {
    if (cache) {
      auto it = cache->ols.find(key);
      if (it != cache->ols.end()) return it->second;
    }
    OlsFit f = annotate(key, [&] { return fit_ols(sample.dy(), sample, m); });
    if (cache) cache->ols.emplace(key, f);
    return f;
  };

  NuisanceSet nus;
  nus.spec = spec;
  nus.complete_case = opt.complete_case;
  if (opt.complete_case) {
    nus.phi_d2 = constant_logit(n, k, m_d2, true);
    nus.phi_d2.fitted.setOnes();
    nus.phi_d2p = constant_logit(n, k, m_d2p, true);
    nus.phi_d2p.fitted.setOnes();
  } else {
    nus.phi_d2 = phi(d.d2, m_d2);
    if (opt.need_propensity) nus.phi_d2p = d.d2 == 0 ? nus.phi_d2 : phi(0, m_d2p);
  }
  auto one_class = [](const std::string& key, auto&& f) {
    try {
      return f();
    } catch (const DegenerateOutcomeError& e) {
      throw EmptyCellError(key + ": " + e.what());
    }
  };
  nus.has_propensity = opt.need_propensity;
  nus.has_outcome = opt.need_outcome;
  if (opt.need_propensity) {
    const std::string kd = "pi|D1=" + std::to_string(d.d1) + ",D2=" + std::to_string(d.d2);
    nus.pi_d1gd2 = one_class(kd, [&] { return logit(kd, t.d1_is_d1, m_obs_d2); });
    nus.pi_d1pgd2p = one_class("pi|D1=0,D2=0", [&] { return logit("pi|D1=0,D2=0", t.d1_is_0, m_obs_d2p); });
    nus.pi_d2 = one_class("pi|D2", [&] { return logit("pi|D2", t.d2_is_1, m_all); });
  }
  if (opt.need_outcome) {
    nus.mu_d = ols("mu|" + d.label(), m_path_d);
    nus.mu_dp = ols("mu|00", m_path_dp);
  }
  return nus;
}

InfluenceIngredients influence_ingredients(const PanelSample& sample, const NuisanceSet& nus) {
  const auto t = nuisance_targets(sample, nus.spec);
  const MatrixXd& X = sample.X();
  InfluenceIngredients b;
  b.b_delta_d2 = logit_influence(t.s, X, nus.phi_d2);
  if (nus.has_propensity) {
    b.b_delta_d2p = logit_influence(t.s, X, nus.phi_d2p);
    b.b_gamma_d1gd2 = logit_influence(t.d1_is_d1, X, nus.pi_d1gd2);
    b.b_gamma_d1pgd2p = logit_influence(t.d1_is_0, X, nus.pi_d1pgd2p);
    b.b_gamma_d2 = logit_influence(t.d2_is_1, X, nus.pi_d2);
  }
  if (nus.has_outcome) {
    b.b_beta_d = ols_influence(sample.dy(), X, nus.mu_d);
    b.b_beta_dp = ols_influence(sample.dy(), X, nus.mu_dp);
  }
  return b;
}

}  // namespace pdatt
