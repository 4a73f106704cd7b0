#include <doctest.h>

#include <cmath>

#include "pdatt/errors.hpp"
#include "pdatt/estimators.hpp"
#include "pdatt/inference.hpp"
#include "pdatt/simulation.hpp"

using namespace pdatt;

namespace {

PanelSample draw(int n, std::uint64_t seed, double c = 0.0) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.c = c;
  Rng rng = make_stream(seed, 0);
  return generate_sample(cfg, rng);
}

}  // namespace

TEST_SUITE("estimators") {
  TEST_CASE("w1 on a four-row sample") {
    std::vector<ObservationRecord> recs(4);
    for (int i = 0; i < 4; ++i) {
      recs[i].x = {1.0};
      recs[i].s = 1;
      recs[i].d1 = i % 2 == 0;
      recs[i].d2 = i % 2 == 0;
    }
    const PanelSample s = PanelSample::from_records(recs, {"(intercept)"});
    NuisanceSet nus;
    nus.spec = spec_from_label("11");
    nus.phi_d2.fitted = VectorXd::Ones(4);
    nus.has_propensity = false;
    const WeightSet w = compute_weights(s, nus);
    const Eigen::Vector4d want(2, 0, 2, 0);
    CHECK((w.w1 - want).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("every weight vector has mean one") {
    const PanelSample s = draw(3000, 1);
    for (const auto& spec : all_specs()) {
      const WeightSet w = compute_weights(s, fit_nuisances(s, spec));
      for (const VectorXd* v : {&w.w1, &w.w2, &w.w3, &w.w4}) CHECK(v->mean() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("no contrast in the outcome fits gives zero") {
    const PanelSample s = draw(3000, 2);
    for (const auto& spec : all_specs()) {
      NuisanceSet nus = fit_nuisances(s, spec);
      nus.mu_d = nus.mu_dp;
      const PanelSample flat = s.with_delta_y(nus.mu_dp.fitted);
      CHECK(std::abs(tau_value(flat, nus, compute_weights(flat, nus), Flavor::R)) < 1e-12);
    }
  }

  TEST_CASE("DR with a zero outcome model is IPW") {
    const PanelSample s = draw(3000, 3);
    for (const auto& spec : all_specs()) {
      NuisanceSet nus = fit_nuisances(s, spec);
      nus.mu_dp.coef.setZero();
      nus.mu_dp.fitted.setZero();
      const WeightSet w = compute_weights(s, nus);
      CHECK(tau_value(s, nus, w, Flavor::DR) == tau_value(s, nus, w, Flavor::IPW));
    }
  }

  TEST_CASE("complete-case DR equals DR when nothing is missing") {
    const PanelSample s = draw(3000, 4, 40.0);
    REQUIRE(count(s.observed_mask()) == s.n());
    for (const auto& spec : all_specs())
      CHECK(std::abs(estimate_cc(s, spec, Flavor::DR).tau_hat - estimate_dr(s, spec).tau_hat) < 1e-12);
  }

  TEST_CASE("constant outcome change gives zero for every estimator") {
    const PanelSample s0 = draw(2000, 5);
    const PanelSample s = s0.with_delta_y(VectorXd::Constant(s0.n(), 2.5));
    CHECK(std::abs(estimate_naive_prepost(s).tau_hat) < 1e-12);
    for (const auto& spec : all_specs()) {
      CHECK(std::abs(estimate_weak_mar_ipw(s, spec).tau_hat) < 1e-12);
      CHECK(std::abs(estimate_robust(s, spec).tau_hat) < 1e-12);
      CHECK(std::abs(estimate_robust_improved(s, spec).tau_hat) < 1e-10);
    }
  }

  TEST_CASE("bounds") {
    std::vector<ObservationRecord> recs;
    for (int i = 0; i < 60; ++i) {
      ObservationRecord r;
      r.x = {1.0, (i % 7) * 0.5};
      r.d2 = i % 2;
      r.s = 1;
      r.d1 = (i / 2) % 2;
      r.y2 = r.d2 ? 1.0 + 0.1 * i : 3.0;
      r.delta_y = *r.y2 - 0.05 * i;
      recs.push_back(r);
    }
    const PanelSample s = PanelSample::from_records(recs, {"(intercept)", "x"});
    const BoundsResult b = partial_id_bounds(s, 1.0);
    CHECK(b.lower <= b.upper);
    CHECK(b.upper - b.lower == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(partial_id_bounds(s, 5.0), DataError);
    CHECK_THROWS_AS(partial_id_bounds(draw(500, 6), 0.0), DataError);
  }

  TEST_CASE("second-period aggregate") {
    const PanelSample s = draw(2000, 7);
    EstimateResult a = estimate_robust(s, spec_from_label("11"));
    EstimateResult b = estimate_robust(s, spec_from_label("01"));
    b.tau_hat = a.tau_hat;
    CHECK(aggregate_second_period(a, b, s) == doctest::Approx(a.tau_hat).epsilon(1e-14));
    CHECK_THROWS_AS(aggregate_second_period(b, a, s), ConfigError);

    // every observed D2=1 unit has D1=1
    std::vector<ObservationRecord> recs;
    for (int i = 0; i < 20; ++i) {
      ObservationRecord r;
      r.x = {1.0, i * 0.1};
      r.d2 = i % 2;
      r.s = i % 5 != 0;
      if (r.s) r.d1 = r.d2;
      recs.push_back(r);
    }
    const PanelSample one = PanelSample::from_records(recs, {"(intercept)", "x"});
    a.tau_hat = 1.25;
    b.tau_hat = -3.0;
    CHECK(aggregate_second_period(a, b, one) == 1.25);
  }

  TEST_CASE("method tags") {
    for (Method m : {Method::R, Method::OR, Method::IPW, Method::DR, Method::CC_OR, Method::CC_IPW, Method::CC_DR,
                     Method::NAIVE, Method::WEAK_MAR_IPW, Method::R_IMPROVED})
      CHECK(parse_method(method_tag(m)) == m);
    CHECK(parse_methods("R,DR,CC-DR").size() == 3);
    CHECK_THROWS_AS(parse_method("XYZ"), ConfigError);
  }

  TEST_CASE("estimate dispatch reports diagnostics and effective counts") {
    const PanelSample s = draw(2000, 8);
    const auto r = estimate(s, spec_from_label("10"), Method::DR);
    CHECK(r.method == Method::DR);
    CHECK(r.n == 2000);
    CHECK(r.n_effective[0] > 0);
    CHECK(r.ci.first < r.tau_hat);
    CHECK(r.ci.second > r.tau_hat);
    CHECK(r.diagnostics.count("min_divisor_prob") == 1);
  }
}
