#pragma once

// Two-stage stratified assignment mechanism: draw a treated count M_s from a
// per-stratum distribution pi_s, then a uniform subset of that size. Exact
// moments, pairwise treatment covariance, assignment probabilities, sampling,
// and precomputed conditional statistic tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cai/propensity.hpp"
#include "cai/rng.hpp"

namespace cai {

struct CountDistribution {
    std::vector<double> probs;  // pi(0..n)
    int n = 0;

    bool valid() const {
        if (static_cast<int>(probs.size()) != n + 1) return false;
        double sum = 0.0;
        for (double p : probs) {
            if (p < 0.0) return false;
            sum += p;
        }
        return std::abs(sum - 1.0) <= 1e-12;
    }
};

struct MechanismSet {
    std::vector<CountDistribution> dists;  // aligned with stratum labels
};

inline double log_binom(int n, int m) {
    return std::lgamma(n + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n - m + 1.0);
}

inline double binom_coeff(int n, int m) { return std::round(std::exp(log_binom(n, m))); }

inline CountDistribution binomial_count_dist(int n, double e) {
    if (e < 0.0 || e > 1.0) throw std::invalid_argument("binomial_count_dist: e outside [0,1]");
    CountDistribution d;
    d.n = n;
    d.probs.assign(n + 1, 0.0);
    if (e == 0.0) {
        d.probs[0] = 1.0;
        return d;
    }
    if (e == 1.0) {
        d.probs[n] = 1.0;
        return d;
    }
    for (int m = 0; m <= n; ++m)
        d.probs[m] = std::exp(log_binom(n, m) + m * std::log(e) + (n - m) * std::log1p(-e));
    double sum = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
    for (double& p : d.probs) p /= sum;
    return d;
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

inline Moments dist_moments(const CountDistribution& dist) {
    Moments mo;
    double m2 = 0.0;
    for (int m = 0; m <= dist.n; ++m) {
        mo.mean += m * dist.probs[m];
        m2 += static_cast<double>(m) * m * dist.probs[m];
    }
    mo.variance = m2 - mo.mean * mo.mean;
    return mo;
}

// Cov(D_i, D_j) = E[M(M-1)]/(n(n-1)) - (E[M]/n)^2
inline double pair_covariance(const CountDistribution& dist) {
    if (dist.n < 2) throw std::invalid_argument("pair_covariance: need n >= 2");
    double e_m = 0.0, e_mm1 = 0.0;
    for (int m = 0; m <= dist.n; ++m) {
        e_m += m * dist.probs[m];
        e_mm1 += static_cast<double>(m) * (m - 1) * dist.probs[m];
    }
    const double n = dist.n;
    return e_mm1 / (n * (n - 1.0)) - (e_m / n) * (e_m / n);
}

inline double assignment_probability(const CountDistribution& dist, const std::vector<int>& d) {
    int m = 0;
    for (int di : d) m += di;
    return dist.probs[m] / binom_coeff(dist.n, m);
}

inline std::vector<int> sample_assignment(const MechanismSet& mechanisms,
                                          const StratifiedSample& strat, Rng& rng) {
    std::vector<int> d(strat.labels.size(), 0);
    std::vector<std::vector<std::size_t>> members(mechanisms.dists.size());
    for (std::size_t i = 0; i < strat.labels.size(); ++i) members[strat.labels[i]].push_back(i);
    for (std::size_t s = 0; s < mechanisms.dists.size(); ++s) {
        auto& idx = members[s];
        const int m = static_cast<int>(draw_index(mechanisms.dists[s].probs, rng.uniform()));
        // partial Fisher-Yates: first m slots become the treated subset
        for (int k = 0; k < m; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.below(idx.size() - k));
            std::swap(idx[k], idx[j]);
            d[idx[k]] = 1;
        }
    }
    return d;
}

// Per-count conditional distributions of the stratum statistic contribution
// sum_{i in subset} q_i: exact when C(n,m) is small, otherwise sampled.
struct ConditionalStatTable {
    // values[m]: sorted draws (exact: all C(n,m) subset sums; sampled: L sums)
    std::vector<std::vector<double>> values;
    std::vector<bool> exact;  // per m

    // fraction of values[m] that are >= t
    double tail(int m, double t) const {
        const auto& v = values[m];
        auto it = std::lower_bound(v.begin(), v.end(), t);
        return static_cast<double>(v.end() - it) / static_cast<double>(v.size());
    }
    // fraction of values[m] that are <= t
    double tail_le(int m, double t) const {
        const auto& v = values[m];
        auto it = std::upper_bound(v.begin(), v.end(), t);
        return static_cast<double>(it - v.begin()) / static_cast<double>(v.size());
    }
    // uniform draw from values[m]
    double draw(int m, Rng& rng) const {
        const auto& v = values[m];
        return v[rng.below(v.size())];
    }
};

inline constexpr int kExhaustiveCap = 5000;

inline ConditionalStatTable precompute_conditional_stats(const std::vector<double>& q, int L,
                                                         Rng& rng) {
    const int n = static_cast<int>(q.size());
    ConditionalStatTable tab;
    tab.values.resize(n + 1);
    tab.exact.assign(n + 1, false);
    for (int m = 0; m <= n; ++m) {
        const double nsub = binom_coeff(n, m);
        if (nsub <= kExhaustiveCap) {
            tab.exact[m] = true;
            auto& out = tab.values[m];
            out.reserve(static_cast<std::size_t>(nsub));
            std::vector<int> comb(m);
            std::iota(comb.begin(), comb.end(), 0);
            if (m == 0) {
                out.push_back(0.0);
            } else {
                for (;;) {
                    double s = 0.0;
                    for (int c : comb) s += q[c];
                    out.push_back(s);
                    // next combination in lexicographic order
                    int i = m - 1;
                    while (i >= 0 && comb[i] == n - m + i) --i;
                    if (i < 0) break;
                    ++comb[i];
                    for (int j = i + 1; j < m; ++j) comb[j] = comb[j - 1] + 1;
                }
            }
        } else {
            auto& out = tab.values[m];
            out.reserve(L);
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            for (int l = 0; l < L; ++l) {
                for (int k = 0; k < m; ++k) {
                    const std::size_t j = k + static_cast<std::size_t>(rng.below(idx.size() - k));
                    std::swap(idx[k], idx[j]);
                }
                double s = 0.0;
                for (int k = 0; k < m; ++k) s += q[idx[k]];
                out.push_back(s);
            }
        }
        std::sort(tab.values[m].begin(), tab.values[m].end());
    }
    return tab;
}

}  // namespace cai
