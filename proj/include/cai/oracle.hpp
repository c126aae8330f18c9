#pragma once

// Brute-force laboratory: exact bias decomposition of the covariate-adjusted
// contrast under arbitrary interference (full enumeration over assignment
// vectors), and exact extremal P-value bounds at desk scale, used to certify
// the Monte Carlo engine.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cai/sensitivity.hpp"

namespace cai {

// Finite population with an explicit joint assignment law on 2^N vectors.
// Mask bit i set means unit i is treated; outcome_mean_fn(i, d) returns the
// mean potential outcome of unit i under the full assignment vector d.
struct PopulationSpec {
    int N = 0;
    std::vector<double> covariate_values;                             // W_i
    std::function<double(int, const std::vector<int>&)> outcome_mean_fn;
    std::vector<double> assignment_law;                               // size 2^N

    bool law_valid() const {
        if (assignment_law.size() != (1u << N)) return false;
        double sum = 0.0;
        for (double p : assignment_law) {
            if (p < 0.0) return false;
            sum += p;
        }
        return std::abs(sum - 1.0) <= 1e-12;
    }
};

inline std::vector<double> product_assignment_law(const std::vector<double>& unit_probs) {
    const int n = static_cast<int>(unit_probs.size());
    std::vector<double> law(1u << n, 1.0);
    for (std::uint32_t mask = 0; mask < law.size(); ++mask)
        for (int i = 0; i < n; ++i)
            law[mask] *= (mask >> i & 1u) ? unit_probs[i] : 1.0 - unit_probs[i];
    return law;
}

struct Decomposition {
    double phi_itr = 0.0;
    double ade = 0.0;
    double adtc = 0.0;  // E[E[Delta | D=1, W]]
    double adtt = 0.0;  // E[E[Delta | D=0, W]]
    double b_ade = 0.0;
    double b_ade_1 = 0.0;
    double b_ade_0 = 0.0;
};

struct OverlapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All expectations are exact sums over the 2^N assignment vectors, with the
// "random unit" drawn uniformly; covariate cells mix their members with
// weights proportional to own-treatment probabilities when conditioning on
// D_i. Every route of the decomposition is summed independently and the
// identities phi = adtc + b1 = adtt + b0 = ade + b are left to the caller to
// cross-check.
inline Decomposition phi_itr_enumerate(const PopulationSpec& pop) {
    const int n = pop.N;
    const std::uint32_t total = 1u << n;
    // per-unit treatment marginals and covariate-cell aggregates
    std::vector<double> p1(n, 0.0);
    for (std::uint32_t mask = 0; mask < total; ++mask)
        for (int i = 0; i < n; ++i)
            if (mask >> i & 1u) p1[i] += pop.assignment_law[mask];
    for (int i = 0; i < n; ++i)
        if (p1[i] <= 1e-12 || p1[i] >= 1.0 - 1e-12)
            throw OverlapError("overlap violated for unit " + std::to_string(i) +
                               " (w=" + std::to_string(pop.covariate_values[i]) + ")");
    std::vector<double> s1(n, 0.0), s0(n, 0.0);  // per-unit: cell sums of its w-cell
    std::vector<int> cell_size(n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (pop.covariate_values[j] == pop.covariate_values[i]) {
                s1[i] += p1[j];
                s0[i] += 1.0 - p1[j];
                ++cell_size[i];
            }

    std::vector<double> y(static_cast<std::size_t>(n) * total);
    {
        std::vector<int> d(n);
        for (std::uint32_t mask = 0; mask < total; ++mask) {
            for (int i = 0; i < n; ++i) d[i] = mask >> i & 1;
            for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i) * total + mask] =
                pop.outcome_mean_fn(i, d);
        }
    }
    auto yv = [&](int i, std::uint32_t m) { return y[static_cast<std::size_t>(i) * total + m]; };

    Decomposition out;
    for (int i = 0; i < n; ++i) {
        const std::uint32_t bit = 1u << i;
        const double cell_w = static_cast<double>(cell_size[i]) / n;  // Pr(W=w_i)
        for (std::uint32_t rest = 0; rest < total; ++rest) {
            if (rest & bit) continue;  // rest ranges over d_{-i}
            const std::uint32_t m1 = rest | bit, m0 = rest;
            const double pr1 = pop.assignment_law[m1], pr0 = pop.assignment_law[m0];
            const double y1 = yv(i, m1), y0 = yv(i, m0);
            const double delta = y1 - y0;
            // conditional mixtures within the covariate cell
            const double w1 = pr1 / s1[i];   // Pr(I=i, D_{-I}=rest | D_I=1, W=w) * n_w-free
            const double w0 = pr0 / s0[i];
            out.phi_itr += cell_w * (w1 * y1 - w0 * y0);
            out.adtc += cell_w * w1 * delta;
            out.adtt += cell_w * w0 * delta;
            out.ade += (pr1 + pr0) * delta / n;
            out.b_ade_1 += cell_w * y0 * (w1 - w0);
            out.b_ade_0 += cell_w * y1 * (w1 - w0);
            const double uncond = (pr1 + pr0) / cell_size[i];
            out.b_ade += cell_w * (y1 * (w1 - uncond) - y0 * (w0 - uncond));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exact extremal P-value bounds for small problems (total units <= 12).
// The rejection probability is multilinear in the per-stratum count
// distributions, so its extrema over the product of moment polytopes are
// attained at products of polytope vertices; we enumerate them all against
// exact conditional tail probabilities.

namespace detail {

// All vertices of {pi >= 0, sum pi = 1, mean = mu, E[M^2] in [e2_lo, e2_hi]}.
inline std::vector<std::vector<double>> polytope_vertices(int n, double mu, double e2_lo,
                                                          double e2_hi) {
    std::vector<std::vector<double>> verts;
    auto consider = [&](const std::vector<int>& supp, const std::vector<double>& w) {
        double e2 = 0.0;
        for (std::size_t k = 0; k < supp.size(); ++k) {
            if (w[k] < -1e-10) return;
            e2 += static_cast<double>(supp[k]) * supp[k] * w[k];
        }
        if (e2 < e2_lo - 1e-9 || e2 > e2_hi + 1e-9) return;
        std::vector<double> pi(n + 1, 0.0);
        double sum = 0.0;
        for (std::size_t k = 0; k < supp.size(); ++k) {
            pi[supp[k]] = std::max(w[k], 0.0);
            sum += pi[supp[k]];
        }
        for (double& v : pi) v /= sum;
        for (const auto& v : verts) {
            double diff = 0.0;
            for (int m = 0; m <= n; ++m) diff = std::max(diff, std::abs(v[m] - pi[m]));
            if (diff < 1e-9) return;
        }
        verts.push_back(std::move(pi));
    };
    if (n == 0) {
        consider({0}, {1.0});
        return verts;
    }
    for (int i = 0; i <= n; ++i) {
        if (std::abs(i - mu) < 1e-9) consider({i}, {1.0});
        for (int j = i + 1; j <= n; ++j) {
            const double wj = (mu - i) / (j - i);
            consider({i, j}, {1.0 - wj, wj});
            for (int k = j + 1; k <= n; ++k) {
                for (double e2 : {e2_lo, e2_hi}) {
                    Eigen::Matrix3d M;
                    M << 1, 1, 1, static_cast<double>(i), static_cast<double>(j),
                        static_cast<double>(k), static_cast<double>(i) * i,
                        static_cast<double>(j) * j, static_cast<double>(k) * k;
                    Eigen::Vector3d w = M.fullPivLu().solve(Eigen::Vector3d(1.0, mu, e2));
                    consider({i, j, k}, {w(0), w(1), w(2)});
                    if (e2_hi - e2_lo < 1e-12) break;
                }
            }
        }
    }
    return verts;
}

}  // namespace detail

struct ExactBounds {
    double lower = 0.0;
    double upper = 0.0;
};

inline ExactBounds exact_pvalue_bounds(const Problem& pr, double xi) {
    const int S = static_cast<int>(pr.strata.size());
    int total_units = 0;
    for (const auto& sd : pr.strata) total_units += sd.n;
    if (total_units > 12) throw std::invalid_argument("exact_pvalue_bounds: total units > 12");

    // Exact conditional tails per count profile: enumerate all assignment
    // vectors once and bucket the statistic by the per-stratum treated counts.
    std::vector<int> radix(S);
    int profiles = 1;
    for (int s = 0; s < S; ++s) {
        radix[s] = pr.strata[s].n + 1;
        profiles *= radix[s];
    }
    std::vector<double> tail_frac(profiles, 0.0);
    {
        std::vector<long long> hits(profiles, 0), counts(profiles, 0);
        std::vector<std::uint32_t> sub(S);
        std::function<void(int, int, double)> rec = [&](int s, int code, double t) {
            if (s == S) {
                ++counts[code];
                if (t >= pr.t_obs - 1e-12) ++hits[code];
                return;
            }
            const auto& sd = pr.strata[s];
            for (std::uint32_t mask = 0; mask < (1u << sd.n); ++mask) {
                double ts = 0.0;
                int m = 0;
                for (int k = 0; k < sd.n; ++k)
                    if (mask >> k & 1u) {
                        ts += sd.q[k];
                        ++m;
                    }
                rec(s + 1, code * radix[s] + m, t + ts);
            }
        };
        rec(0, 0, 0.0);
        for (int c = 0; c < profiles; ++c)
            if (counts[c]) tail_frac[c] = static_cast<double>(hits[c]) / counts[c];
    }

    auto objective = [&](const std::vector<const std::vector<double>*>& pis) {
        double val = 0.0;
        std::vector<int> m(S, 0);
        for (int code = 0; code < profiles; ++code) {
            int c = code;
            double w = 1.0;
            for (int s = S - 1; s >= 0; --s) {
                m[s] = c % radix[s];
                c /= radix[s];
                w *= (*pis[s])[m[s]];
            }
            val += w * tail_frac[code];
        }
        return val;
    };

    std::vector<std::vector<double>> binom(S);
    std::vector<const std::vector<double>*> pick(S);
    for (int s = 0; s < S; ++s)
        binom[s] = binomial_count_dist(pr.strata[s].n, pr.strata[s].e_hat).probs;
    for (int s = 0; s < S; ++s) pick[s] = &binom[s];
    const double base = objective(pick);
    if (xi <= 1.0) return {base, base};  // the band pins the benchmark mechanism

    std::vector<std::vector<std::vector<double>>> verts(S);
    for (int s = 0; s < S; ++s) {
        const auto& sd = pr.strata[s];
        const double mu = sd.n * sd.e_hat;
        const double var_b = sd.n * sd.e_hat * (1.0 - sd.e_hat);
        const double v_hi = std::min(xi * var_b, mu * (sd.n - mu));
        verts[s] = detail::polytope_vertices(sd.n, mu, mu * mu + var_b, mu * mu + v_hi);
        verts[s].push_back(binom[s]);  // benchmark is always feasible
    }
    ExactBounds out{base, base};
    std::function<void(int)> rec = [&](int s) {
        if (s == S) {
            const double v = objective(pick);
            out.lower = std::min(out.lower, v);
            out.upper = std::max(out.upper, v);
            return;
        }
        for (const auto& v : verts[s]) {
            pick[s] = &v;
            rec(s + 1);
        }
    };
    rec(0);
    return out;
}

}  // namespace cai
