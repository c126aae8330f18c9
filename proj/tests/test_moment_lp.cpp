#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cai/moment_lp.hpp"
#include "cai/rng.hpp"

using namespace cai;

namespace {

MomentLP make(int n, double mu, double vlo, double vhi, std::vector<double> obj,
              LPDirection dir) {
    MomentLP p;
    p.n = n;
    p.mean_target = mu;
    p.var_lo = vlo;
    p.var_hi = vhi;
    p.objective = std::move(obj);
    p.direction = dir;
    return p;
}

}  // namespace

TEST_CASE("collapsed variance band pins the binomial for n=2") {
    const auto p = make(2, 1.0, 0.5, 0.5, {0.3, 0.9, 0.1}, LPDirection::maximize);
    const auto sol = solve_moment_lp(p);
    REQUIRE(sol.status == LPStatus::optimal);
    CHECK(sol.dist.probs[0] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(sol.dist.probs[1] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(sol.dist.probs[2] == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("one-parameter family example: max 0.5, min 0") {
    auto p = make(2, 1.0, 0.5, 1.0, {0, 1, 0}, LPDirection::maximize);
    auto sol = solve_moment_lp(p);
    REQUIRE(sol.status == LPStatus::optimal);
    CHECK(sol.objective_value == doctest::Approx(0.5).epsilon(1e-9));
    p.direction = LPDirection::minimize;
    sol = solve_moment_lp(p);
    REQUIRE(sol.status == LPStatus::optimal);
    CHECK(sol.objective_value == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(sol.dist.probs[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(sol.dist.probs[2] == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("constant objective returns the constant") {
    const auto p = make(3, 1.2, 1.2 * 0.6, 1.5, {0.7, 0.7, 0.7, 0.7}, LPDirection::minimize);
    const auto sol = solve_moment_lp(p);
    REQUIRE(sol.status == LPStatus::optimal);
    CHECK(sol.objective_value == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("infeasible variance interval is signaled, not thrown") {
    const auto p = make(2, 1.0, 2.5, 3.0, {0, 1, 0}, LPDirection::maximize);
    CHECK(solve_moment_lp(p).status == LPStatus::infeasible);
    CHECK(vertex_oracle(p).status == LPStatus::infeasible);
}

TEST_CASE("degenerate stratum n=1 uses the mean-pinned two-point distribution") {
    const auto p = make(1, 0.3, 0.0, 5.0, {0.2, 0.9}, LPDirection::maximize);
    const auto sol = solve_moment_lp(p);
    REQUIRE(sol.status == LPStatus::optimal);
    CHECK(sol.dist.probs[0] == doctest::Approx(0.7));
    CHECK(sol.dist.probs[1] == doctest::Approx(0.3));
}

TEST_CASE("simplex agrees with the vertex oracle on randomized instances") {
    Rng r(41);
    for (int t = 0; t < 200; ++t) {
        const int n = 2 + static_cast<int>(r.below(19));
        MomentLP p;
        p.n = n;
        p.objective.resize(n + 1);
        for (auto& a : p.objective) a = r.uniform();
        const double e = 0.05 + 0.9 * r.uniform();
        p.mean_target = n * e;
        const double vb = n * e * (1 - e);
        p.var_lo = vb;
        p.var_hi = (1.0 + 4 * r.uniform()) * vb;
        p.direction = t % 2 ? LPDirection::maximize : LPDirection::minimize;
        const auto a = solve_moment_lp(p);
        const auto b = vertex_oracle(p);
        REQUIRE(a.status == b.status);
        if (a.status == LPStatus::optimal)
            CHECK(a.objective_value == doctest::Approx(b.objective_value).epsilon(1e-8));
    }
}

TEST_CASE("solutions satisfy the moment constraints they were given") {
    Rng r(43);
    for (int t = 0; t < 100; ++t) {
        const int n = 2 + static_cast<int>(r.below(10));
        MomentLP p;
        p.n = n;
        p.objective.resize(n + 1);
        for (auto& a : p.objective) a = r.normal();
        const double e = 0.1 + 0.8 * r.uniform();
        p.mean_target = n * e;
        const double vb = n * e * (1 - e);
        p.var_lo = vb;
        p.var_hi = 3.0 * vb;
        p.direction = LPDirection::maximize;
        const auto sol = solve_moment_lp(p);
        REQUIRE(sol.status == LPStatus::optimal);
        REQUIRE(sol.dist.valid());
        const auto mo = dist_moments(sol.dist);
        CHECK(mo.mean == doctest::Approx(p.mean_target).epsilon(1e-9));
        const double cap = std::min(p.var_hi, p.mean_target * (n - p.mean_target));
        CHECK(mo.variance >= p.var_lo - 1e-7);
        CHECK(mo.variance <= cap + 1e-7);
    }
}

TEST_CASE("maximize dominates minimize and widening is monotone") {
    Rng r(47);
    for (int t = 0; t < 50; ++t) {
        const int n = 3 + static_cast<int>(r.below(8));
        MomentLP p;
        p.n = n;
        p.objective.resize(n + 1);
        for (auto& a : p.objective) a = r.uniform();
        const double e = 0.2 + 0.6 * r.uniform();
        p.mean_target = n * e;
        const double vb = n * e * (1 - e);
        p.var_lo = vb;
        p.var_hi = 1.5 * vb;
        p.direction = LPDirection::maximize;
        const double max_narrow = solve_moment_lp(p).objective_value;
        p.direction = LPDirection::minimize;
        const double min_narrow = solve_moment_lp(p).objective_value;
        CHECK(max_narrow >= min_narrow - 1e-10);
        p.var_hi = 3.0 * vb;
        const double min_wide = solve_moment_lp(p).objective_value;
        p.direction = LPDirection::maximize;
        const double max_wide = solve_moment_lp(p).objective_value;
        CHECK(max_wide >= max_narrow - 1e-9);
        CHECK(min_wide <= min_narrow + 1e-9);
    }
}
