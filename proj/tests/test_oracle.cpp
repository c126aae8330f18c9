#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cai/oracle.hpp"

using namespace cai;

namespace {

PopulationSpec random_spec(Rng& r, int max_n) {
    PopulationSpec pop;
    pop.N = 3 + static_cast<int>(r.below(max_n - 2));
    for (int i = 0; i < pop.N; ++i)
        pop.covariate_values.push_back(static_cast<double>(r.below(2)));
    std::vector<double> coef(pop.N);
    for (auto& c : coef) c = r.normal();
    pop.outcome_mean_fn = [coef](int i, const std::vector<int>& d) {
        int s = 0;
        for (std::size_t j = 0; j < d.size(); ++j)
            if (static_cast<int>(j) != i) s += d[j];
        return coef[i] * d[i] + 0.4 * s + 0.15 * d[i] * s;
    };
    pop.assignment_law.assign(std::size_t{1} << pop.N, 0.0);
    double sum = 0.0;
    for (auto& p : pop.assignment_law) sum += (p = r.uniform());
    for (auto& p : pop.assignment_law) p /= sum;
    return pop;
}

}  // namespace

TEST_CASE("no interference means zero bias and phi equal to the direct effect") {
    // zero bias additionally needs marginal propensities constant within each
    // covariate cell; an exchangeable law (probability a function of the
    // treated count only) delivers that while keeping assignments dependent
    PopulationSpec pop;
    pop.N = 4;
    pop.covariate_values = {0, 0, 0, 0};
    pop.outcome_mean_fn = [](int i, const std::vector<int>& d) { return 2.0 * d[i] + i; };
    Rng r(5);
    std::vector<double> by_count(5);
    double csum = 0.0;
    for (auto& c : by_count) csum += (c = r.uniform());
    pop.assignment_law.assign(16, 0.0);
    double sum = 0.0;
    for (std::uint32_t mask = 0; mask < 16; ++mask) {
        const int k = __builtin_popcount(mask);
        sum += (pop.assignment_law[mask] = by_count[k] / csum / binom_coeff(4, k));
    }
    for (auto& p : pop.assignment_law) p /= sum;
    const auto dec = phi_itr_enumerate(pop);
    CHECK(dec.b_ade == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(dec.b_ade_1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(dec.b_ade_0 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(dec.phi_itr == doctest::Approx(dec.ade).epsilon(1e-12));
    CHECK(dec.ade == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("covariate-only assignment law zeroes the bias despite interference") {
    PopulationSpec pop;
    pop.N = 5;
    pop.covariate_values = {0, 1, 0, 1, 1};
    pop.outcome_mean_fn = [](int i, const std::vector<int>& d) {
        int s = 0;
        for (std::size_t j = 0; j < d.size(); ++j)
            if (static_cast<int>(j) != i) s += d[j];
        return 3.0 * d[i] + 1.7 * s + 0.9 * d[i] * s;
    };
    std::vector<double> probs;
    for (double w : pop.covariate_values) probs.push_back(w ? 0.7 : 0.3);
    pop.assignment_law = product_assignment_law(probs);
    const auto dec = phi_itr_enumerate(pop);
    CHECK(std::abs(dec.b_ade) < 1e-12);
    CHECK(dec.phi_itr == doctest::Approx(dec.ade).epsilon(1e-12));
}

TEST_CASE("N=3 correlated law perturbed toward independence: hand-enumerated values") {
    // law = 0.9 * (half-half on all-ones/all-zeros) + 0.1 * iid fair coins;
    // outcome mean Y_i = d_i + sum of the others' treatments. The exact
    // rational values were enumerated by hand over the 8 assignment vectors:
    // phi = 14/5, ade = 1, b_ade = b_ade_1 = b_ade_0 = 9/5.
    PopulationSpec pop;
    pop.N = 3;
    pop.covariate_values = {1, 1, 1};
    pop.outcome_mean_fn = [](int i, const std::vector<int>& d) {
        int s = 0;
        for (std::size_t j = 0; j < d.size(); ++j)
            if (static_cast<int>(j) != i) s += d[j];
        return static_cast<double>(d[i] + s);
    };
    pop.assignment_law.assign(8, 0.1 / 8);
    pop.assignment_law[0] += 0.45;
    pop.assignment_law[7] += 0.45;
    const auto dec = phi_itr_enumerate(pop);
    CHECK(dec.phi_itr == doctest::Approx(2.8).epsilon(1e-12));
    CHECK(dec.ade == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dec.b_ade == doctest::Approx(1.8).epsilon(1e-12));
    CHECK(dec.b_ade_1 == doctest::Approx(1.8).epsilon(1e-12));
    CHECK(dec.b_ade_0 == doctest::Approx(1.8).epsilon(1e-12));
}

TEST_CASE("all three decomposition routes agree on randomized populations") {
    Rng r(77);
    for (int t = 0; t < 50; ++t) {
        const auto pop = random_spec(r, 8);
        const auto dec = phi_itr_enumerate(pop);
        CHECK(dec.phi_itr - dec.adtc - dec.b_ade_1 == doctest::Approx(0.0).epsilon(1e-10));
        CHECK(dec.phi_itr - dec.adtt - dec.b_ade_0 == doctest::Approx(0.0).epsilon(1e-10));
        CHECK(dec.phi_itr - dec.ade - dec.b_ade == doctest::Approx(0.0).epsilon(1e-10));
    }
}

TEST_CASE("overlap violations are reported with the offending unit") {
    PopulationSpec pop;
    pop.N = 2;
    pop.covariate_values = {0, 0};
    pop.outcome_mean_fn = [](int i, const std::vector<int>& d) { return double(d[i]); };
    pop.assignment_law = {0.5, 0.0, 0.5, 0.0};  // unit 0 never treated
    CHECK_THROWS_AS(phi_itr_enumerate(pop), OverlapError);
}

namespace {

Problem tiny_problem(std::vector<double> y, std::vector<int> d, std::vector<int> labels,
                     int n_strata) {
    StratifiedSample strat;
    strat.effective_K = n_strata;
    strat.labels = labels;
    strat.stratum_sizes.assign(n_strata, 0);
    std::vector<double> treated(n_strata, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        strat.stratum_sizes[labels[i]]++;
        treated[labels[i]] += d[i];
    }
    strat.treated_shares.clear();
    for (int s = 0; s < n_strata; ++s)
        strat.treated_shares.push_back(treated[s] / strat.stratum_sizes[s]);
    return build_problem(y, d, strat, 2000, 1);
}

}  // namespace

TEST_CASE("exact bounds: single stratum n=2 examples") {
    // ranks [1,2], e=1/2, T_obs=2
    Problem pr = tiny_problem({1.0, 2.0}, {0, 1}, {0, 0}, 1);
    const auto at1 = exact_pvalue_bounds(pr, 1.0);
    // binomial tail: Pr(T>=2) = Pr(M=1)*1/2 + Pr(M=2) = 0.25 + 0.25 = 0.5
    CHECK(at1.lower == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(at1.upper == doctest::Approx(0.5).epsilon(1e-12));
    // the profile a=(0, 0.5, 1) is linear in m, so with the mean pinned every
    // feasible mechanism gives exactly 0.5: widening xi changes nothing
    const auto at2 = exact_pvalue_bounds(pr, 2.0);
    CHECK(at2.upper == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(at2.lower == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("exact bounds bracket the benchmark and widen with xi") {
    Problem pr = tiny_problem({3.0, 1.0, 2.0, 4.0, 10.0, 7.0, 5.0, 6.0},
                              {1, 0, 0, 1, 0, 1, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1}, 2);
    const auto base = exact_pvalue_bounds(pr, 1.0);
    const auto mid = exact_pvalue_bounds(pr, 2.0);
    const auto wide = exact_pvalue_bounds(pr, 4.0);
    CHECK(base.lower == base.upper);
    CHECK(mid.lower <= base.lower + 1e-12);
    CHECK(mid.upper >= base.upper - 1e-12);
    CHECK(wide.lower <= mid.lower + 1e-12);
    CHECK(wide.upper >= mid.upper - 1e-12);
}

TEST_CASE("exact bounds refuse oversized problems") {
    std::vector<double> y(14);
    std::vector<int> d(14), labels(14, 0);
    for (int i = 0; i < 14; ++i) {
        y[i] = i;
        d[i] = i % 2;
    }
    Problem pr = tiny_problem(y, d, labels, 1);
    CHECK_THROWS(exact_pvalue_bounds(pr, 2.0));
}
