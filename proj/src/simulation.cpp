#include "pdatt/simulation.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "pdatt/errors.hpp"

namespace pdatt {

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return Rng(seq);
}

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(v.size());
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

int num_threads(int requested) { return requested > 0 ? requested : omp_get_max_threads(); }

// truth draws use their own fixed seed so they never depend on cfg.seed
constexpr std::uint64_t kTruthSeed = 0x7a11b0a7d5eedULL;
constexpr long kTruthChunk = 1L << 16;

}  // namespace

DgpParams DgpParams::reference() {
  DgpParams p;
  p.gamma1 = vec({0.0, -0.5, -0.5, -0.5, -0.5});
  p.gamma11 = vec({0.0, -0.5, -0.5, 0.5, 0.5});
  p.gamma10 = vec({0.0, 0.5, 0.5, -0.5, -0.5});
  p.beta11 = vec({1.5, -0.25, 0.25, 0.25, 0.25});
  p.beta10 = vec({1.0, -0.25, -0.25, 0.25, 0.25});
  p.beta01 = vec({1.0, 0.25, 0.25, -0.25, -0.25});
  p.beta00 = vec({0.0, 0.25, 0.25, 0.25, 0.25});
  p.delta1 = vec({0.0, -0.5, -0.5, 0.5, 0.5});
  p.delta0 = vec({0.0, 0.5, 0.5, 0.5, -0.5});
  return p;
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> s = {"none", "M", "P", "O", "M-P", "M-O", "P-O", "all"};
  return s;
}

DgpConfig scenario_config(const std::string& name, DgpConfig base) {
  std::string key = name;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  if (key == "none") {
    base.eta_p = base.eta_m = base.eta_o = 1.0;
    return base;
  }
  base.eta_p = base.eta_m = base.eta_o = 1.0;
  if (key == "all") {
    base.eta_p = base.eta_m = base.eta_o = 0.0;
    return base;
  }
  std::size_t i = 0;
  while (i < key.size()) {
    const char c = key[i];
    if (c == 'm') base.eta_m = 0.0;
    else if (c == 'p') base.eta_p = 0.0;
    else if (c == 'o') base.eta_o = 0.0;
    else throw ConfigError("simulation", "unknown scenario '" + name + "'");
    ++i;
    if (i < key.size()) {
      if (key[i] != '-') throw ConfigError("simulation", "unknown scenario '" + name + "'");
      ++i;
    }
  }
  return base;
}

MatrixXd kang_schafer_raw(const MatrixXd& X4) {
  const Eigen::Index n = X4.rows();
  MatrixXd Z(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x1 = X4(i, 0), x2 = X4(i, 1), x3 = X4(i, 2), x4 = X4(i, 3);
    Z(i, 0) = std::exp(0.5 * x1);
    Z(i, 1) = 10.0 + x2 / (1.0 + std::exp(x1));
    Z(i, 2) = std::pow(0.6 + x1 * x3 / 25.0, 3);
    Z(i, 3) = std::pow(20.0 + x2 + x4, 2);
  }
  return Z;
}

MatrixXd kang_schafer(const MatrixXd& X4) {
  MatrixXd Z = kang_schafer_raw(X4);
  const double n = static_cast<double>(Z.rows());
  for (int j = 0; j < 4; ++j) {
    const double m = Z.col(j).mean();
    Z.col(j).array() -= m;
    const double sd = std::sqrt(Z.col(j).squaredNorm() / (n - 1.0));
    Z.col(j) /= sd;
  }
  return Z;
}

namespace {

VectorXd logistic_of(const VectorXd& eta) { return eta.unaryExpr([](double t) { return logistic(t); }); }

MatrixXd mix(double eta, const MatrixXd& X, const MatrixXd& Z) {
  if (eta == 1.0) return X;
  if (eta == 0.0) return Z;
  return eta * X + (1.0 - eta) * Z;
}

}  // namespace

SimDraw generate_with_truth(const DgpConfig& cfg, Rng& rng) {
  const int n = cfg.n;
  if (n < 1) throw ConfigError("simulation", "n must be positive");
  const auto& P = cfg.params;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;

  MatrixXd X(n, 5);
  MatrixXd U(n, 3);
  VectorXd eps(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (int j = 1; j <= 4; ++j) X(i, j) = normal(rng);
    for (int j = 0; j < 3; ++j) U(i, j) = unif(rng);
    eps(i) = normal(rng);
  }
  MatrixXd Z(n, 5);
  Z.col(0).setOnes();
  Z.rightCols(4) = kang_schafer(X.rightCols(4));
  const MatrixXd Xp = mix(cfg.eta_p, X, Z), Xm = mix(cfg.eta_m, X, Z), Xo = mix(cfg.eta_o, X, Z);

  VectorXd d1c = P.delta1, d0c = P.delta0;
  d1c(0) += cfg.c;
  d0c(0) += cfg.c;

  SimDraw out;
  out.p_d2 = logistic_of(Xp * P.gamma1);
  out.p_11 = logistic_of(Xp * P.gamma11);
  out.p_10 = logistic_of(Xp * P.gamma10);
  out.q_1 = logistic_of(Xm * d1c);
  out.q_0 = logistic_of(Xm * d0c);
  out.m["11"] = Xo * P.beta11;
  out.m["10"] = Xo * P.beta10;
  out.m["01"] = Xo * P.beta01;
  out.m["00"] = Xo * P.beta00;

  std::vector<std::uint8_t> s(n), d2(n);
  std::vector<std::int8_t> d1(n);
  out.d1_full.resize(n);
  VectorXd dy(n);
  for (int i = 0; i < n; ++i) {
    d2[i] = out.p_d2(i) >= U(i, 0);
    const int a = (d2[i] ? out.p_11(i) : out.p_10(i)) >= U(i, 1);
    out.d1_full[i] = static_cast<std::int8_t>(a);
    s[i] = (d2[i] ? out.q_1(i) : out.q_0(i)) >= U(i, 2);
    d1[i] = s[i] ? static_cast<std::int8_t>(a) : std::int8_t{-1};
    const std::string key = std::to_string(a) + std::to_string(d2[i]);
    dy(i) = out.m[key](i) + eps(i);
  }
  out.sample = PanelSample(std::move(X), std::move(dy), std::move(s), std::move(d1), std::move(d2),
                           {"(intercept)", "x1", "x2", "x3", "x4"});
  return out;
}

PanelSample generate_sample(const DgpConfig& cfg, Rng& rng) { return generate_with_truth(cfg, rng).sample; }

TrueNuisance true_nuisance(const SimDraw& draw, const EstimandSpec& spec, double tau) {
  const auto d = spec.d;
  const VectorXd one = VectorXd::Ones(draw.p_d2.size());
  TrueNuisance t;
  t.m_d = draw.m.at(d.label());
  t.m_dp = draw.m.at("00");
  t.q_d2 = d.d2 == 1 ? draw.q_1 : draw.q_0;
  t.q_d2p = draw.q_0;
  if (d.d2 == 1) t.p_d1gd2 = d.d1 == 1 ? draw.p_11 : (one - draw.p_11).eval();
  else t.p_d1gd2 = draw.p_10;
  t.p_d1pgd2p = one - draw.p_10;
  t.p_d2 = d.d2 == 1 ? draw.p_d2 : (one - draw.p_d2).eval();
  t.p_d2p = one - draw.p_d2;
  t.tau = tau;
  return t;
}

// ----------------------------------------------------------------- truths

namespace {

// E[X_o | D = d] for d = 11, 10, 01 under population standardization
struct PathMeans {
  std::array<VectorXd, 3> xo;
};

void draw_chunk(long chunk, long draws, MatrixXd& X4) {
  const long rows = std::min(kTruthChunk, draws - chunk * kTruthChunk);
  Rng rng = make_stream(kTruthSeed, static_cast<std::uint64_t>(chunk));
  std::normal_distribution<double> normal;
  X4.resize(rows, 4);
  for (long i = 0; i < rows; ++i)
    for (int j = 0; j < 4; ++j) X4(i, j) = normal(rng);
}

PathMeans compute_path_means(const DgpConfig& cfg, long draws) {
  const long chunks = (draws + kTruthChunk - 1) / kTruthChunk;
  const bool need_z = cfg.eta_p != 1.0 || cfg.eta_o != 1.0;
  const double shift[4] = {1.0, 10.0, 0.216, 400.0};

  // pass 1: population moments of the raw transforms
  std::array<double, 4> zmean{}, zsd{1, 1, 1, 1};
  if (need_z) {
    std::vector<std::array<double, 8>> part(chunks);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < chunks; ++c) {
      MatrixXd X4;
      draw_chunk(c, draws, X4);
      const MatrixXd Z = kang_schafer_raw(X4);
      std::array<double, 8> acc{};
      for (Eigen::Index i = 0; i < Z.rows(); ++i)
        for (int j = 0; j < 4; ++j) {
          const double v = Z(i, j) - shift[j];
          acc[j] += v;
          acc[4 + j] += v * v;
        }
      part[c] = acc;
    }
    std::array<double, 8> tot{};
    for (const auto& p : part)
      for (int j = 0; j < 8; ++j) tot[j] += p[j];
    for (int j = 0; j < 4; ++j) {
      const double m = tot[j] / draws;
      zmean[j] = m + shift[j];
      zsd[j] = std::sqrt(tot[4 + j] / draws - m * m);
    }
  }

  // pass 2: Rao-Blackwellized path-probability weighted means of X_o
  const auto& P = cfg.params;
  struct Acc {
    std::array<VectorXd, 3> sx;
    std::array<double, 3> sp{};
  };
  std::vector<Acc> part(chunks);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) {
    MatrixXd X4;
    draw_chunk(c, draws, X4);
    const Eigen::Index rows = X4.rows();
    MatrixXd X(rows, 5), Z(rows, 5);
    X.col(0).setOnes();
    X.rightCols(4) = X4;
    Z.col(0).setOnes();
    if (need_z) {
      Z.rightCols(4) = kang_schafer_raw(X4);
      for (int j = 0; j < 4; ++j) Z.col(j + 1) = ((Z.col(j + 1).array() - zmean[j]) / zsd[j]).matrix();
    }
    const MatrixXd Xp = need_z ? mix(cfg.eta_p, X, Z) : X;
    const MatrixXd Xo = need_z ? mix(cfg.eta_o, X, Z) : X;
    const VectorXd pd2 = logistic_of(Xp * P.gamma1);
    const VectorXd p11 = logistic_of(Xp * P.gamma11);
    const VectorXd p10 = logistic_of(Xp * P.gamma10);
    Acc a;
    for (auto& v : a.sx) v = VectorXd::Zero(5);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double pr[3] = {pd2(i) * p11(i), (1.0 - pd2(i)) * p10(i), pd2(i) * (1.0 - p11(i))};
      for (int k = 0; k < 3; ++k) {
        a.sx[k] += pr[k] * Xo.row(i).transpose();
        a.sp[k] += pr[k];
      }
    }
    part[c] = std::move(a);
  }
  PathMeans pm;
  std::array<double, 3> sp{};
  for (auto& v : pm.xo) v = VectorXd::Zero(5);
  for (const auto& a : part)
    for (int k = 0; k < 3; ++k) {
      pm.xo[k] += a.sx[k];
      sp[k] += a.sp[k];
    }
  for (int k = 0; k < 3; ++k) pm.xo[k] /= sp[k];
  return pm;
}

const PathMeans& path_means(const DgpConfig& cfg, long draws) {
  static std::mutex mu;
  static std::map<std::vector<double>, PathMeans> cache;
  std::vector<double> key = {cfg.eta_p, cfg.eta_o, static_cast<double>(draws)};
  for (const VectorXd* v : {&cfg.params.gamma1, &cfg.params.gamma11, &cfg.params.gamma10})
    key.insert(key.end(), v->data(), v->data() + v->size());
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, compute_path_means(cfg, draws)).first;
  return it->second;
}

}  // namespace

std::array<double, 3> true_pdatt(const DgpConfig& cfg, long draws) {
  const PathMeans& pm = path_means(cfg, draws);
  const auto& P = cfg.params;
  return {pm.xo[0].dot(P.beta11 - P.beta00), pm.xo[1].dot(P.beta10 - P.beta00), pm.xo[2].dot(P.beta01 - P.beta00)};
}

double truth_for(const std::array<double, 3>& t, const EstimandSpec& spec) {
  const auto d = spec.d;
  if (d == TreatmentPath{1, 1}) return t[0];
  if (d == TreatmentPath{1, 0}) return t[1];
  return t[2];
}

// ------------------------------------------------------------ Monte Carlo

namespace {

struct Slot {
  double est = 0.0, se = 0.0, seb = 0.0;
  bool ok = false;
};

bool standard_flavor(Method m) {
  return m == Method::R || m == Method::OR || m == Method::IPW || m == Method::DR;
}
bool cc_flavor(Method m) { return m == Method::CC_OR || m == Method::CC_IPW || m == Method::CC_DR; }

Flavor flavor_for(Method m) {
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

// all requested estimators on one draw; slots laid out [spec][method]
void run_replication(const SimDraw& draw, const McOptions& opt, const std::array<double, 3>& truths, Slot* slots) {
  const PanelSample& sample = draw.sample;
  const std::size_t nm = opt.methods.size();
  FitCache cache, cc_cache;
  std::optional<PanelSample> cc;
  for (std::size_t si = 0; si < opt.specs.size(); ++si) {
    const EstimandSpec& spec = opt.specs[si];
    std::optional<NuisanceSet> nus, cc_nus;
    bool nus_failed = false, cc_failed = false;
    double seb = 0.0;
    if (opt.seb) {
      try {
        seb = seb_estimate(sample, spec, true_nuisance(draw, spec, truth_for(truths, spec)));
      } catch (const std::exception&) {
        seb = std::nan("");
      }
    }
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const Method m = opt.methods[mi];
      Slot& out = slots[si * nm + mi];
      out.seb = seb;
      try {
        EstimateResult r;
        if (standard_flavor(m)) {
          if (nus_failed) continue;
          if (!nus) {
            try {
              nus = fit_nuisances(sample, spec, {}, &cache);
            } catch (...) {
              nus_failed = true;
              throw;
            }
          }
          r = estimate_with_fits(sample, *nus, flavor_for(m), m);
        } else if (cc_flavor(m)) {
          if (cc_failed) continue;
          if (!cc) cc = sample.subset(sample.observed_mask());
          if (!cc_nus) {
            try {
              NuisanceOptions o;
              o.complete_case = true;
              cc_nus = fit_nuisances(*cc, spec, o, &cc_cache);
            } catch (...) {
              cc_failed = true;
              throw;
            }
          }
          r = estimate_with_fits(*cc, *cc_nus, flavor_for(m), m);
        } else if (m == Method::R_IMPROVED) {
          r = estimate_robust_improved(sample, spec, &cache);
        } else {
          r = estimate(sample, spec, m);
        }
        if (std::isfinite(r.tau_hat) && std::isfinite(r.se)) {
          out.est = r.tau_hat;
          out.se = r.se;
          out.ok = true;
        }
      } catch (const std::exception&) {
        out.ok = false;
      }
    }
  }
}

}  // namespace

const McCell& McResult::at(Method m, const std::string& pdatt) const {
  const std::string label = pdatt.size() == 2 ? pdatt + "-00" : pdatt;
  for (const auto& c : cells)
    if (c.method == m && c.pdatt == label) return c;
  throw ConfigError("simulation", "no Monte Carlo cell " + method_tag(m) + " " + pdatt);
}

McResult run_monte_carlo(const DgpConfig& cfg, int reps, const McOptions& opt) {
  if (reps < 1) throw ConfigError("simulation", "reps must be at least 1");
  if (opt.methods.empty() || opt.specs.empty()) throw ConfigError("simulation", "no estimators or specs");
  McResult res;
  res.cfg = cfg;
  res.reps = reps;
  res.truths = true_pdatt(cfg, opt.truth_draws);
  const std::size_t ncell = opt.methods.size() * opt.specs.size();
  std::vector<Slot> slots(static_cast<std::size_t>(reps) * ncell);
  std::vector<double> missing(reps, 0.0);

  auto one = [&](int r) {
    Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(r));
    const SimDraw draw = generate_with_truth(cfg, rng);
    missing[r] = 1.0 - draw.sample.s_vector().mean();
    run_replication(draw, opt, res.truths, &slots[static_cast<std::size_t>(r) * ncell]);
  };
  if (opt.serial) {
    for (int r = 0; r < reps; ++r) one(r);
  } else {
#pragma omp parallel for schedule(dynamic) num_threads(num_threads(opt.threads))
    for (int r = 0; r < reps; ++r) one(r);
  }

  // aggregation in replication order, independent of scheduling
  const double z = normal_critical(0.95);
  const double n = cfg.n;
  double ms = 0.0;
  for (double m : missing) ms += m;
  res.mean_missing_share = ms / reps;
  for (std::size_t si = 0; si < opt.specs.size(); ++si)
    for (std::size_t mi = 0; mi < opt.methods.size(); ++mi) {
      McCell c;
      c.method = opt.methods[mi];
      c.pdatt = opt.specs[si].label();
      c.truth = truth_for(res.truths, opt.specs[si]);
      double se_sum = 0.0, nv_sum = 0.0, seb_sum = 0.0;
      int covered = 0, seb_n = 0;
      for (int r = 0; r < reps; ++r) {
        const Slot& s = slots[static_cast<std::size_t>(r) * ncell + si * opt.methods.size() + mi];
        if (std::isfinite(s.seb) && s.seb > 0.0) {
          seb_sum += s.seb;
          ++seb_n;
        }
        if (!s.ok) {
          ++c.failures;
          continue;
        }
        c.estimates.push_back(s.est);
        c.ses.push_back(s.se);
        se_sum += s.se;
        nv_sum += n * s.se * s.se;
        covered += std::abs(s.est - c.truth) <= z * s.se;
      }
      c.reps_ok = static_cast<int>(c.estimates.size());
      if (seb_n) c.mean_seb = seb_sum / seb_n;
      if (c.reps_ok > 0) {
        double sum = 0.0;
        for (double e : c.estimates) sum += e;
        c.mean_estimate = sum / c.reps_ok;
        c.bias = c.mean_estimate - c.truth;
        double ss = 0.0;
        for (double e : c.estimates) ss += (e - c.mean_estimate) * (e - c.mean_estimate);
        c.sd = c.reps_ok > 1 ? std::sqrt(ss / (c.reps_ok - 1)) : 0.0;
        c.mean_se = se_sum / c.reps_ok;
        c.coverage = static_cast<double>(covered) / c.reps_ok;
        c.size = 1.0 - c.coverage;
        c.mean_n_var_hat = nv_sum / c.reps_ok;
        c.n_var_mc = n * c.sd * c.sd;
      }
      res.cells.push_back(std::move(c));
    }
  return res;
}

// ------------------------------------------------------------------ sweeps

namespace {

std::vector<SweepRow> sweep(const std::string& name, const std::vector<double>& grid, const DgpConfig& base,
                            int n_large, long truth_draws, void (*apply)(DgpConfig&, double)) {
  std::vector<std::vector<SweepRow>> per(grid.size());
  const std::vector<Method> methods = {Method::R, Method::DR, Method::CC_DR};
#pragma omp parallel for schedule(dynamic)
  for (long g = 0; g < static_cast<long>(grid.size()); ++g) {
    DgpConfig cfg = base;
    cfg.n = n_large;
    apply(cfg, grid[g]);
    const auto truths = true_pdatt(cfg, truth_draws);
    Rng rng = make_stream(base.seed, static_cast<std::uint64_t>(g));
    const PanelSample sample = generate_sample(cfg, rng);
    const double miss = 1.0 - sample.s_vector().mean();
    FitCache cache;
    for (const auto& spec : all_specs()) {
      std::optional<NuisanceSet> nus;
      try {
        nus = fit_nuisances(sample, spec, {}, &cache);
      } catch (const std::exception&) {
      }
      for (Method m : methods) {
        SweepRow row;
        row.sweep = name;
        row.x = grid[g];
        row.method = m;
        row.pdatt = spec.label();
        row.truth = truth_for(truths, spec);
        row.missing_share = miss;
        try {
          if (m == Method::CC_DR) {
            row.estimate = estimate_cc(sample, spec, Flavor::DR).tau_hat;
          } else {
            if (!nus) throw NumericalError("simulation", "nuisance fits failed");
            row.estimate = estimate_with_fits(sample, *nus, flavor_for(m), m).tau_hat;
          }
          row.bias = row.estimate - row.truth;
        } catch (const std::exception&) {
          row.failed = true;
          row.estimate = row.bias = std::nan("");
        }
        per[g].push_back(row);
      }
    }
  }
  std::vector<SweepRow> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace

std::vector<SweepRow> sweep_missingness(const std::vector<double>& c_grid, const DgpConfig& cfg, int n_large,
                                        long truth_draws) {
  return sweep("missingness", c_grid, cfg, n_large, truth_draws, [](DgpConfig& c, double x) { c.c = x; });
}

std::vector<SweepRow> sweep_misspecification(const std::vector<double>& eta_m_grid, const DgpConfig& cfg,
                                             int n_large, long truth_draws) {
  return sweep("misspecification", eta_m_grid, cfg, n_large, truth_draws, [](DgpConfig& c, double x) {
    c.eta_m = x;
    c.c = 0.0;
  });
}

// ------------------------------------------------------------------- power

double beta11_intercept_for(const DgpConfig& cfg, double target, long truth_draws) {
  DgpConfig c = cfg;
  auto f = [&](double b0) {
    c.params.beta11(0) = b0;
    return true_pdatt(c, truth_draws)[0] - target;
  };
  double lo = cfg.params.beta11(0) - 1.0, hi = cfg.params.beta11(0) + 1.0;
  int grow = 0;
  while (f(lo) > 0.0 || f(hi) < 0.0) {
    const double w = hi - lo;
    if (f(lo) > 0.0) lo -= w;
    if (f(hi) < 0.0) hi += w;
    if (++grow > 60) throw NumericalError("simulation", "target tau unreachable by an intercept shift");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double PowerCurve::at(Method m, std::size_t g) const {
  for (std::size_t k = 0; k < methods.size(); ++k)
    if (methods[k] == m) return rejection[k].at(g);
  throw ConfigError("simulation", "method not in power curve");
}

PowerCurve power_curve(const DgpConfig& cfg, const std::vector<double>& tau_grid, int reps,
                       const std::vector<Method>& methods, int threads, long truth_draws) {
  if (tau_grid.empty()) throw ConfigError("simulation", "power grid is empty");
  if (reps < 1) throw ConfigError("simulation", "reps must be at least 1");
  const std::size_t G = tau_grid.size(), M = methods.size();
  std::vector<double> shift(G);
  for (std::size_t g = 0; g < G; ++g)
    shift[g] = beta11_intercept_for(cfg, tau_grid[g], truth_draws) - cfg.params.beta11(0);

  const EstimandSpec spec = spec_from_label("11");
  const double z = normal_critical(0.95);
  // -1 failed, 0 not rejected, 1 rejected; same draws at every grid point
  std::vector<std::int8_t> out(static_cast<std::size_t>(reps) * G * M, -1);
#pragma omp parallel for schedule(dynamic) num_threads(num_threads(threads))
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(r));
    const SimDraw draw = generate_with_truth(cfg, rng);
    const PanelSample& base = draw.sample;
    FitCache cache;
    for (std::size_t g = 0; g < G; ++g) {
      VectorXd dy = base.dy();
      for (int i = 0; i < base.n(); ++i)
        if (draw.d1_full[i] == 1 && base.d2(i) == 1) dy(i) += shift[g];
      const PanelSample s = base.with_delta_y(std::move(dy));
      cache.ols.clear();
      std::optional<NuisanceSet> nus;
      for (std::size_t m = 0; m < M; ++m) {
        try {
          EstimateResult e;
          if (standard_flavor(methods[m])) {
            if (!nus) nus = fit_nuisances(s, spec, {}, &cache);
            e = estimate_with_fits(s, *nus, flavor_for(methods[m]), methods[m]);
          } else {
            e = estimate(s, spec, methods[m]);
          }
          if (std::isfinite(e.tau_hat) && std::isfinite(e.se) && e.se > 0.0)
            out[(static_cast<std::size_t>(r) * G + g) * M + m] = std::abs(e.tau_hat) > z * e.se;
        } catch (const std::exception&) {
        }
      }
    }
  }
  PowerCurve pc;
  pc.grid = tau_grid;
  pc.methods = methods;
  pc.rejection.assign(M, std::vector<double>(G, 0.0));
  pc.reps_ok.assign(M, std::vector<int>(G, 0));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t g = 0; g < G; ++g) {
      int rej = 0, ok = 0;
      for (int r = 0; r < reps; ++r) {
        const auto v = out[(static_cast<std::size_t>(r) * G + g) * M + m];
        if (v < 0) continue;
        ++ok;
        rej += v;
      }
      pc.reps_ok[m][g] = ok;
      pc.rejection[m][g] = ok ? static_cast<double>(rej) / ok : std::nan("");
    }
  return pc;
}

double isotonic_deviation(const std::vector<double>& y) {
  // pool adjacent violators
  std::vector<double> val;
  std::vector<int> cnt;
  for (double v : y) {
    val.push_back(v);
    cnt.push_back(1);
    while (val.size() > 1 && val[val.size() - 2] > val.back()) {
      const int c = cnt[cnt.size() - 2] + cnt.back();
      const double m = (val[val.size() - 2] * cnt[cnt.size() - 2] + val.back() * cnt.back()) / c;
      val.pop_back();
      cnt.pop_back();
      val.back() = m;
      cnt.back() = c;
    }
  }
  double dev = 0.0;
  std::size_t i = 0;
  for (std::size_t b = 0; b < val.size(); ++b)
    for (int k = 0; k < cnt[b]; ++k, ++i) dev = std::max(dev, std::abs(y[i] - val[b]));
  return dev;
}

double power_isotonic_deviation(const std::vector<double>& grid, const std::vector<double>& rejection) {
  std::vector<std::pair<double, double>> right, left;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (grid[g] >= 0.0) right.push_back({grid[g], rejection[g]});
    if (grid[g] <= 0.0) left.push_back({-grid[g], rejection[g]});
  }
  double dev = 0.0;
  for (auto* side : {&right, &left}) {
    std::sort(side->begin(), side->end());
    std::vector<double> y;
    for (const auto& p : *side) y.push_back(p.second);
    dev = std::max(dev, isotonic_deviation(y));
  }
  return dev;
}

}  // namespace pdatt
