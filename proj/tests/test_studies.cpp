#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cai/studies.hpp"

using namespace cai;

TEST_CASE("Gauss-Hermite rule integrates standard-normal moments") {
    std::vector<double> x, w;
    gauss_hermite(64, x, w);
    double m0 = 0, m2 = 0, m4 = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        m0 += w[k];
        m2 += w[k] * x[k] * x[k];
        m4 += w[k] * x[k] * x[k] * x[k] * x[k];
    }
    CHECK(m0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m2 == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(m4 == doctest::Approx(3.0).epsilon(1e-10));
    // logistic expectation sanity: marginalizing a zero-loading shock changes nothing
    double e = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) e += w[k] * logistic(0.3);
    CHECK(e == doctest::Approx(logistic(0.3)).epsilon(1e-12));
}

TEST_CASE("IPW study is unbiased without the shared shock") {
    const auto r = simulate_ipw_study(0.0, 500, 400, 5);
    CHECK(std::abs(r.bias) < 3 * r.bias_se + 0.01);
    CHECK(r.ade_target == doctest::Approx(0.956).epsilon(0.02));
}

TEST_CASE("constant-effect variant recovers tau0 exactly as the target") {
    const auto r = simulate_ipw_study(0.0, 300, 200, 7, 1, 0.5, 0.0);
    CHECK(r.ade_target == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(r.bias) < 3 * r.bias_se + 0.01);
}

TEST_CASE("bias grows with the shock loading") {
    const auto lo = simulate_ipw_study(0.0, 400, 300, 9);
    const auto hi = simulate_ipw_study(1.5, 400, 300, 9);
    CHECK(hi.bias > lo.bias + 0.2);
    CHECK(hi.rmse > lo.rmse);
}

TEST_CASE("invalid study inputs throw") {
    CHECK_THROWS(simulate_ipw_study(-1.0, 100, 10, 1));
    CHECK_THROWS(simulate_ipw_study(0.0, 1, 10, 1));
}

TEST_CASE("power study holds size under the null and rejects large effects") {
    const auto null = fisher_power_study(0.0, 0.0, 200, 60, 2000, 3);
    CHECK(null.rate < 0.1);
    const auto alt = fisher_power_study(30000.0, 0.0, 200, 60, 2000, 3);
    CHECK(alt.rate > 0.9);
    CHECK(alt.se == doctest::Approx(std::sqrt(alt.rate * (1 - alt.rate) / 60)));
}

TEST_CASE("synthetic base dataset has full-rank covariates and both arms") {
    const Dataset ds = synthetic_base_dataset(1);
    CHECK(ds.unit_count() == 614);
    CHECK(ds.covariate_count() == 4);
    int treated = 0;
    for (int d : ds.treatments) treated += d;
    CHECK(treated > 100);
    CHECK(treated < 500);
    ds.validate();
}

TEST_CASE("calibrated designs on the synthetic base satisfy the curve invariants") {
    const Dataset base = synthetic_base_dataset(2);
    SensitivityConfig cfg;
    cfg.seed = 2;
    cfg.b_base = 4000;
    cfg.b_inner = 400;
    cfg.b_final = 4000;
    cfg.xi_grid = {1.0, 1.5, 3.0};
    for (CalibratedSpec spec : {CalibratedSpec::gaussian, CalibratedSpec::heavy_tailed}) {
        const auto curve = calibrated_sensitivity_study(base, spec, cfg);
        REQUIRE(curve.points.size() == 3);
        CHECK(curve.points[0].lower_p == curve.baseline_p);
        CHECK(curve.points[0].upper_p == curve.baseline_p);
        for (std::size_t i = 1; i < curve.points.size(); ++i) {
            CHECK(curve.points[i].upper_p >= curve.points[i - 1].upper_p);
            CHECK(curve.points[i].lower_p <= curve.points[i - 1].lower_p);
        }
        for (const auto& pt : curve.points) {
            CHECK(pt.lower_p > 0.0);
            CHECK(pt.upper_p <= 1.0);
            CHECK(pt.lower_p <= pt.upper_p);
        }
    }
}

TEST_CASE("heavy-tailed disturbances produce wider bound spreads than Gaussian") {
    const Dataset base = synthetic_base_dataset(4);
    SensitivityConfig cfg;
    cfg.seed = 4;
    cfg.b_base = 4000;
    cfg.b_inner = 500;
    cfg.b_final = 6000;
    cfg.xi_grid = {1.0, 3.0};
    const auto g = calibrated_sensitivity_study(base, CalibratedSpec::gaussian, cfg);
    const auto h = calibrated_sensitivity_study(base, CalibratedSpec::heavy_tailed, cfg);
    const double spread_g = g.points[1].upper_p - g.points[1].lower_p;
    const double spread_h = h.points[1].upper_p - h.points[1].lower_p;
    CHECK(spread_h > 0.0);
    CHECK(spread_g > 0.0);
}
