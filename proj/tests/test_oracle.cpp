// Enumeration oracles: with saturated (1, x) models on a sample that equals
// its population, every estimator has a closed-form target.

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracle_population.hpp"
#include "pdatt/estimators.hpp"
#include "pdatt/inference.hpp"

using namespace pdatt;
using oracle::Population;
using oracle::PopulationSpec;

namespace {

void shift(LogitFit& f, const PanelSample& s, double a, double b) {
  f.coef(0) += a;
  f.coef(1) += b;
  f.refresh(s.X());
}

void shift(OlsFit& f, const PanelSample& s, double a, double b) {
  f.coef(0) += a;
  f.coef(1) += b;
  f.refresh(s.X());
}

enum class Wrong { None, Missing, Propensity, Outcome };

NuisanceSet corrupted(const PanelSample& s, const EstimandSpec& spec, Wrong which) {
  NuisanceSet nus = fit_nuisances(s, spec);
  switch (which) {
    case Wrong::None: break;
    case Wrong::Missing:
      shift(nus.phi_d2, s, 0.4, -0.9);
      shift(nus.phi_d2p, s, -0.3, 0.8);
      break;
    case Wrong::Propensity:
      shift(nus.pi_d1gd2, s, 0.5, -0.7);
      shift(nus.pi_d1pgd2p, s, -0.6, 0.4);
      shift(nus.pi_d2, s, 0.3, 0.5);
      break;
    case Wrong::Outcome:
      shift(nus.mu_d, s, 0.7, -1.1);
      shift(nus.mu_dp, s, -0.5, 0.9);
      break;
  }
  return nus;
}

double value(const PanelSample& s, const NuisanceSet& nus, Flavor f) {
  return tau_value(s, nus, compute_weights(s, nus), f);
}

// E[D2 (E[ΔY|D2=1,X] − E[ΔY|D2=0,X])] / E[D2] by enumeration
double naive_target(const Population& pop) {
  double t = 0.0;
  for (int x = 0; x < 2; ++x) {
    const double p11 = pop.p_d1_given_d2_x(1, 1, x), p10 = pop.p_d1_given_d2_x(1, 0, x);
    const double e1 = p11 * pop.cond_mean({1, 1}, x) + (1 - p11) * pop.cond_mean({0, 1}, x);
    const double e0 = p10 * pop.cond_mean({1, 0}, x) + (1 - p10) * pop.cond_mean({0, 0}, x);
    t += pop.p_x_given_d2(1, x) * (e1 - e0);
  }
  return t;
}

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("all flavors recover the enumerated PDATT under correct specification") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 25; ++rep) {
      const PopulationSpec sp = rep == 0 ? oracle::reference_spec() : oracle::random_spec(rng);
      const Population pop(sp);
      const PanelSample s = pop.sample();
      for (const auto& spec : all_specs()) {
        const double truth = pop.tau(spec.d);
        CAPTURE(rep);
        CAPTURE(spec.label());
        CHECK(std::abs(estimate_or(s, spec).tau_hat - truth) < 1e-10);
        CHECK(std::abs(estimate_ipw(s, spec).tau_hat - truth) < 1e-10);
        CHECK(std::abs(estimate_dr(s, spec).tau_hat - truth) < 1e-10);
        CHECK(std::abs(estimate_robust(s, spec).tau_hat - truth) < 1e-10);
      }
    }
  }

  TEST_CASE("sample weights equal the enumerated population weights") {
    const Population pop(oracle::reference_spec());
    const PanelSample s = pop.sample();
    const auto& sp = oracle::reference_spec();
    for (const auto& spec : all_specs()) {
      const auto d = spec.d;
      const NuisanceSet nus = fit_nuisances(s, spec);
      const WeightSet w = compute_weights(s, nus);
      const double pd = pop.mass([&](const oracle::Atom& a) { return a.d1 == d.d1 && a.d2 == d.d2; });
      for (int i = 0; i < s.n(); ++i) {
        const int x = static_cast<int>(s.X()(i, 1));
        const double q = sp.q[x][d.d2], q0 = sp.q[x][0];
        const double pi = d.d1 ? sp.p1[x][d.d2] : 1.0 - sp.p1[x][d.d2];
        const double p_d = pi * (d.d2 ? sp.p2[x] : 1.0 - sp.p2[x]);
        const double p_00 = (1.0 - sp.p1[x][0]) * (1.0 - sp.p2[x]);
        const double w1 = s.has_path(i, d) ? 1.0 / (q * pd) : 0.0;
        const double w2 = s.has_path(i, {0, 0}) ? p_d / (p_00 * q0 * pd) : 0.0;
        const double w3 = s.d2(i) == d.d2 ? pi / pd : 0.0;
        const double w4 = s.d2(i) == d.d2 && s.s(i) ? pi / (q * pd) : 0.0;
        REQUIRE(std::abs(w.w1(i) - w1) < 1e-10);
        REQUIRE(std::abs(w.w2(i) - w2) < 1e-10);
        REQUIRE(std::abs(w.w3(i) - w3) < 1e-10);
        REQUIRE(std::abs(w.w4(i) - w4) < 1e-10);
      }
    }
  }

  TEST_CASE("robust survives any single wrong model; the others fail on the missingness model") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 10; ++rep) {
      const Population pop(rep == 0 ? oracle::reference_spec() : oracle::random_spec(rng));
      const PanelSample s = pop.sample();
      for (const auto& spec : all_specs()) {
        const double truth = pop.tau(spec.d);
        for (Wrong wr : {Wrong::Missing, Wrong::Propensity, Wrong::Outcome}) {
          CAPTURE(rep);
          CAPTURE(static_cast<int>(wr));
          CHECK(std::abs(value(s, corrupted(s, spec, wr), Flavor::R) - truth) < 1e-10);
        }
      }
    }
    const Population pop(oracle::reference_spec());
    const PanelSample s = pop.sample();
    for (const auto& spec : all_specs()) {
      const double truth = pop.tau(spec.d);
      const NuisanceSet bad = corrupted(s, spec, Wrong::Missing);
      CAPTURE(spec.label());
      CHECK(std::abs(value(s, bad, Flavor::DR) - truth) >= 1e-3);
      CHECK(std::abs(value(s, bad, Flavor::IPW) - truth) >= 1e-3);
      CHECK(std::abs(value(s, bad, Flavor::OR) - truth) >= 1e-3);
    }
  }

  TEST_CASE("decomposition identities in each correct-specification case") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 10; ++rep) {
      const Population pop(rep == 0 ? oracle::reference_spec() : oracle::random_spec(rng));
      const PanelSample s = pop.sample();
      for (const auto& spec : all_specs()) {
        CAPTURE(rep);
        CAPTURE(spec.label());
        {  // π and μ correct
          const NuisanceSet nus = corrupted(s, spec, Wrong::Missing);
          const auto t = decompose(s, nus, compute_weights(s, nus));
          CHECK(std::abs((t.I - t.II) - t.VI) < 1e-12);
          CHECK(std::abs(t.III - t.IV) < 1e-12);
        }
        {  // φ and μ correct
          const NuisanceSet nus = corrupted(s, spec, Wrong::Propensity);
          const auto t = decompose(s, nus, compute_weights(s, nus));
          CHECK(std::abs(t.V - t.VI) < 1e-12);
          CHECK(std::abs(t.III - t.IV) < 1e-12);
        }
        {  // φ and π correct
          const NuisanceSet nus = corrupted(s, spec, Wrong::Outcome);
          const auto t = decompose(s, nus, compute_weights(s, nus));
          CHECK(std::abs(t.V - t.VI) < 1e-12);
          CHECK(std::abs(t.II - t.IV) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("naive pre/post estimand is the stated weighted combination") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 20; ++rep) {
      // the three-term form holds when P(x | D2) does not depend on D2
      const Population pop(oracle::random_spec(rng, true));
      const double rhs = pop.tau({1, 1}) * pop.p_d1_given_d2(1, 1) + pop.tau({0, 1}) * pop.p_d1_given_d2(0, 1) -
                         pop.tau({1, 0}) * pop.p_d1_given_d2(1, 0);
      CHECK(std::abs(estimate_naive_prepost(pop.sample()).tau_hat - rhs) < 1e-10);
    }
    for (int rep = 0; rep < 20; ++rep) {
      const Population pop(oracle::random_spec(rng));
      CHECK(std::abs(estimate_naive_prepost(pop.sample()).tau_hat - naive_target(pop)) < 1e-10);
    }
  }

  TEST_CASE("naive estimand is tau_11 when D1 = D2") {
    PopulationSpec sp = oracle::reference_spec();
    sp.p1[0] = {0.0, 1.0};
    sp.p1[1] = {0.0, 1.0};
    const Population pop(sp);
    CHECK(std::abs(estimate_naive_prepost(pop.sample()).tau_hat - pop.tau({1, 1})) < 1e-10);
  }

  TEST_CASE("complete-case DR is unbiased when missingness ignores X given D2") {
    std::mt19937_64 rng(19);
    for (int rep = 0; rep < 10; ++rep) {
      PopulationSpec sp = oracle::random_spec(rng);
      sp.q[1] = sp.q[0];
      const Population pop(sp);
      const PanelSample s = pop.sample();
      for (const auto& spec : all_specs())
        CHECK(std::abs(estimate_cc(s, spec, Flavor::DR).tau_hat - pop.tau(spec.d)) < 1e-10);
    }
    // and biased when it does not
    const Population pop(oracle::reference_spec());
    CHECK(std::abs(estimate_cc(pop.sample(), spec_from_label("11"), Flavor::DR).tau_hat - pop.tau({1, 1})) > 1e-3);
  }

  TEST_CASE("weak-MAR IPW equals IPW when selection ignores the outcome") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 10; ++rep) {
      const Population pop(rep == 0 ? oracle::reference_spec() : oracle::random_spec(rng));
      const PanelSample s = pop.sample();
      for (const auto& spec : all_specs()) {
        const auto r = estimate_weak_mar_ipw(s, spec);
        CHECK(std::abs(r.tau_hat - estimate_ipw(s, spec).tau_hat) < 1e-10);
        CHECK(std::abs(r.diagnostics.at("q_dy_coef_d2")) < 1e-8);
      }
    }
  }

  TEST_CASE("weak-MAR IPW recovers the PDATT when selection depends on the outcome") {
    // logit P(S=1) = ln3 · (a_{D2} + ΔY), supported on {-1,0,1} so every
    // selection probability is a quarter
    PopulationSpec sp;
    sp.px = {0.5, 0.5};
    sp.p2 = {0.5, 0.5};
    sp.p1[0] = {0.25, 0.5};
    sp.p1[1] = {0.5, 0.75};
    // paths 00, 01, 10, 11; D2=1 outcomes in {0,1,2}, D2=0 in {-1,0,1}
    sp.m[0] = {0.0, 1.0, 0.0, 1.0};
    sp.e[0] = {1.0, 0.0, 1.0, 1.0};
    sp.m[1] = {-1.0, 0.0, 1.0, 2.0};
    sp.e[1] = {0.0, 0.0, 0.0, 0.0};
    sp.q_dy = [](int, int d2, double dy) {
      const double t = std::log(3.0) * ((d2 ? -1.0 : 0.0) + dy);
      return std::round(4.0 / (1.0 + std::exp(-t))) / 4.0;
    };
    const Population pop(sp);
    const PanelSample s = pop.sample();
    for (const auto& spec : all_specs()) {
      CAPTURE(spec.label());
      const double truth = pop.tau(spec.d);
      CHECK(std::abs(estimate_weak_mar_ipw(s, spec).tau_hat - truth) < 1e-10);
      // plain MAR-based IPW misses it
      CHECK(std::abs(estimate_ipw(s, spec).tau_hat - truth) > 1e-3);
    }
  }

  TEST_CASE("bounds sandwich the D2=1 target under monotone response") {
    std::mt19937_64 rng(29);
    for (int rep = 0; rep < 20; ++rep) {
      PopulationSpec sp = oracle::random_spec(rng);
      for (int x = 0; x < 2; ++x) sp.m[x][2] = std::max(sp.m[x][2], sp.m[x][0]);
      const Population pop(sp);
      double y_min = 1e300, target = 0.0;
      for (const auto& a : pop.atoms()) y_min = std::min(y_min, a.dy);
      for (int x = 0; x < 2; ++x) {
        const double p11 = pop.p_d1_given_d2_x(1, 1, x);
        const double m00 = pop.cond_mean({0, 0}, x);
        target += pop.p_x_given_d2(1, x) *
                  (p11 * (pop.cond_mean({1, 1}, x) - m00) + (1 - p11) * (pop.cond_mean({0, 1}, x) - m00));
      }
      const auto b = partial_id_bounds(pop.sample(true), y_min);
      CHECK(b.lower <= b.upper);
      CHECK(b.lower <= target + 1e-10);
      CHECK(target <= b.upper + 1e-10);
    }
  }

  TEST_CASE("second-period aggregate matches enumeration") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 10; ++rep) {
      const Population pop(oracle::random_spec(rng));
      const PanelSample s = pop.sample();
      const auto r11 = estimate_robust(s, spec_from_label("11"));
      const auto r01 = estimate_robust(s, spec_from_label("01"));
      const double want =
          pop.tau({1, 1}) * pop.p_d1_given_d2(1, 1) + pop.tau({0, 1}) * pop.p_d1_given_d2(0, 1);
      CHECK(std::abs(aggregate_second_period(r11, r01, s) - want) < 1e-10);
    }
  }

  TEST_CASE("improved estimator recovers the enumerated PDATT") {
    std::mt19937_64 rng(37);
    for (int rep = 0; rep < 5; ++rep) {
      const Population pop(rep == 0 ? oracle::reference_spec() : oracle::random_spec(rng));
      const PanelSample s = pop.sample();
      for (const auto& spec : all_specs()) {
        CHECK(std::abs(estimate_robust_improved(s, spec).tau_hat - pop.tau(spec.d)) < 1e-8);
        CHECK(std::abs(estimate_robust_improved(s, spec, nullptr, {true}).tau_hat - pop.tau(spec.d)) < 1e-8);
      }
    }
  }
}
