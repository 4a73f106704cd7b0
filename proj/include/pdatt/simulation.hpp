#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pdatt/estimators.hpp"
#include "pdatt/inference.hpp"

namespace pdatt {

// Replication streams: a pure function of (seed, stream).
using Rng = std::mt19937_64;
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

// Coefficient vectors over (1, X1..X4); reference() is the default design.
struct DgpParams {
  VectorXd gamma1, gamma11, gamma10;
  VectorXd beta11, beta10, beta01, beta00;
  VectorXd delta1, delta0;
  static DgpParams reference();
};

struct DgpConfig {
  int n = 10000;
  double eta_p = 1.0, eta_m = 1.0, eta_o = 1.0;
  double c = 0.0;  // added to the intercepts of delta1 and delta0
  DgpParams params = DgpParams::reference();
  std::uint64_t seed = 42;
};

// none, M, P, O, M-P, M-O, P-O, all
const std::vector<std::string>& scenario_names();
DgpConfig scenario_config(const std::string& name, DgpConfig base = {});

// raw transforms of 4 standard-normal columns
MatrixXd kang_schafer_raw(const MatrixXd& X4);
// raw transforms standardized within the sample (variance with n-1)
MatrixXd kang_schafer(const MatrixXd& X4);

// One generated sample with its latent quantities.
struct SimDraw {
  PanelSample sample;
  std::vector<std::int8_t> d1_full;
  VectorXd p_d2;        // P(D2=1|X)
  VectorXd p_11, p_10;  // P(D1=1 | D2=1, X), P(D1=1 | D2=0, X)
  VectorXd q_1, q_0;    // P(S=1 | D2, X)
  std::map<std::string, VectorXd> m;  // m_d(X) keyed "11", "10", "01", "00"
};

SimDraw generate_with_truth(const DgpConfig& cfg, Rng& rng);
PanelSample generate_sample(const DgpConfig& cfg, Rng& rng);

TrueNuisance true_nuisance(const SimDraw& draw, const EstimandSpec& spec, double tau);

inline constexpr long kTruthDraws = 10'000'000;
// τ for 11, 10, 01 (in that order)
std::array<double, 3> true_pdatt(const DgpConfig& cfg, long draws = kTruthDraws);
double truth_for(const std::array<double, 3>& t, const EstimandSpec& spec);

struct McOptions {
  std::vector<Method> methods{Method::R, Method::DR};
  std::vector<EstimandSpec> specs = all_specs();
  bool seb = false;
  bool serial = false;  // reference path without OpenMP
  int threads = 0;      // 0 = runtime default
  long truth_draws = kTruthDraws;
};

struct McCell {
  Method method = Method::R;
  std::string pdatt;
  double truth = 0.0;
  int reps_ok = 0;
  int failures = 0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
  double size = 0.0;
  double mean_n_var_hat = 0.0;  // mean of n·se²
  double n_var_mc = 0.0;        // n·sd²
  double mean_seb = 0.0;        // mean Ω̂*; 0 unless requested
  std::vector<double> estimates;
  std::vector<double> ses;
};

struct McResult {
  DgpConfig cfg;
  int reps = 0;
  std::array<double, 3> truths{};
  double mean_missing_share = 0.0;
  std::vector<McCell> cells;
  const McCell& at(Method m, const std::string& pdatt) const;
};

McResult run_monte_carlo(const DgpConfig& cfg, int reps, const McOptions& opt = {});

struct SweepRow {
  std::string sweep;  // "missingness" or "misspecification"
  double x = 0.0;
  Method method = Method::R;
  std::string pdatt;
  double estimate = 0.0;
  double truth = 0.0;
  double bias = 0.0;
  double missing_share = 0.0;
  bool failed = false;
};

std::vector<SweepRow> sweep_missingness(const std::vector<double>& c_grid, const DgpConfig& cfg, int n_large,
                                        long truth_draws = kTruthDraws);
std::vector<SweepRow> sweep_misspecification(const std::vector<double>& eta_m_grid, const DgpConfig& cfg,
                                             int n_large, long truth_draws = kTruthDraws);

// intercept of beta11 that makes the 11-00 truth equal target (bisection)
double beta11_intercept_for(const DgpConfig& cfg, double target, long truth_draws = kTruthDraws);

struct PowerCurve {
  std::vector<double> grid;
  std::vector<Method> methods;
  // rejection[m][g] for methods[m] at grid[g]
  std::vector<std::vector<double>> rejection;
  std::vector<std::vector<int>> reps_ok;
  double at(Method m, std::size_t g) const;
};

PowerCurve power_curve(const DgpConfig& cfg, const std::vector<double>& tau_grid, int reps,
                       const std::vector<Method>& methods = {Method::R, Method::DR}, int threads = 0,
                       long truth_draws = kTruthDraws);

// largest gap between a sequence and its nondecreasing least-squares fit
double isotonic_deviation(const std::vector<double>& y);
// monotonicity of a power curve in |τ|, checked separately on each side of 0
double power_isotonic_deviation(const std::vector<double>& grid, const std::vector<double>& rejection);

}  // namespace pdatt
