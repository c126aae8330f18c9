#pragma once

// Moment-constrained LP over treated-count distributions: optimize a linear
// objective over the simplex subject to a pinned mean and a variance interval.
// With the mean fixed at mu the variance interval is equivalent to linear
// bounds on the second moment: mu^2 + v_lo <= sum m^2 pi(m) <= mu^2 + v_hi.
// Primary solver: dense two-phase tableau simplex with Bland's rule.
// Independent check: vertex enumeration over small supports.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cai/assignment.hpp"

namespace cai {

enum class LPDirection { maximize, minimize };
enum class LPStatus { optimal, infeasible };

struct MomentLP {
    std::vector<double> objective;  // a(0..n)
    int n = 0;
    double mean_target = 0.0;
    double var_lo = 0.0;
    double var_hi = 0.0;
    LPDirection direction = LPDirection::maximize;
};

struct LPSolution {
    CountDistribution dist;
    double objective_value = 0.0;
    LPStatus status = LPStatus::infeasible;
    bool mean_active = true;
    bool var_lo_active = false;
    bool var_hi_active = false;
};

namespace detail {

constexpr double kFeasTol = 1e-9;
constexpr double kOptTol = 1e-10;

// Simplex on: min c'x s.t. Ax = b, x >= 0 (b made nonnegative by row flips).
// Returns false on infeasibility; on success fills x.
inline bool simplex_solve(std::vector<std::vector<double>> A, std::vector<double> b,
                          std::vector<double> c, std::vector<double>& x) {
    const int m = static_cast<int>(A.size());
    const int nv = static_cast<int>(c.size());
    for (int i = 0; i < m; ++i)
        if (b[i] < 0.0) {
            b[i] = -b[i];
            for (double& v : A[i]) v = -v;
        }
    // Tableau: columns = nv original + m artificial + rhs
    const int total = nv + m;
    std::vector<std::vector<double>> T(m, std::vector<double>(total + 1, 0.0));
    std::vector<int> basis(m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < nv; ++j) T[i][j] = A[i][j];
        T[i][nv + i] = 1.0;
        T[i][total] = b[i];
        basis[i] = nv + i;
    }
    auto pivot = [&](int pr, int pc) {
        const double p = T[pr][pc];
        for (double& v : T[pr]) v /= p;
        for (int i = 0; i < m; ++i) {
            if (i == pr) continue;
            const double f = T[i][pc];
            if (f == 0.0) continue;
            for (int j = 0; j <= total; ++j) T[i][j] -= f * T[pr][j];
        }
        basis[pr] = pc;
    };
    // Run simplex for a given cost vector over the first ncols columns.
    auto run = [&](const std::vector<double>& cost, int ncols) {
        for (;;) {
            std::vector<double> z(ncols, 0.0);
            for (int i = 0; i < m; ++i)
                if (basis[i] < ncols)
                    for (int j = 0; j < ncols; ++j) z[j] += cost[basis[i]] * T[i][j];
            int pc = -1;  // Bland: lowest-index improving column
            for (int j = 0; j < ncols; ++j) {
                bool in_basis = false;
                for (int i = 0; i < m; ++i)
                    if (basis[i] == j) in_basis = true;
                if (!in_basis && cost[j] - z[j] < -kOptTol) {
                    pc = j;
                    break;
                }
            }
            if (pc < 0) return true;
            int pr = -1;
            double best = 0.0;
            for (int i = 0; i < m; ++i) {
                if (T[i][pc] > kFeasTol) {
                    const double ratio = T[i][total] / T[i][pc];
                    if (pr < 0 || ratio < best - kOptTol ||
                        (ratio < best + kOptTol && basis[i] < basis[pr])) {
                        pr = i;
                        best = ratio;
                    }
                }
            }
            if (pr < 0) return false;  // unbounded (cannot occur on the simplex)
            pivot(pr, pc);
        }
    };
    // Phase 1: minimize sum of artificials.
    std::vector<double> c1(total, 0.0);
    for (int j = nv; j < total; ++j) c1[j] = 1.0;
    run(c1, total);
    double phase1 = 0.0;
    for (int i = 0; i < m; ++i)
        if (basis[i] >= nv) phase1 += T[i][total];
    if (phase1 > 1e-8) return false;
    // Drive residual artificials out of the basis where possible.
    for (int i = 0; i < m; ++i) {
        if (basis[i] >= nv) {
            int pc = -1;
            for (int j = 0; j < nv; ++j)
                if (std::abs(T[i][j]) > kFeasTol) {
                    pc = j;
                    break;
                }
            if (pc >= 0) pivot(i, pc);
        }
    }
    // Phase 2 over original columns only.
    std::vector<double> c2(c);
    c2.resize(total, 0.0);
    if (!run(c2, nv)) return false;
    x.assign(nv, 0.0);
    for (int i = 0; i < m; ++i)
        if (basis[i] < nv) x[basis[i]] = T[i][total];
    return true;
}

inline LPSolution finalize(const MomentLP& p, std::vector<double> pi) {
    LPSolution sol;
    sol.status = LPStatus::optimal;
    double sum = 0.0;
    for (double& v : pi) {
        if (v < 0.0 && v > -kFeasTol) v = 0.0;
        sum += v;
    }
    for (double& v : pi) v /= sum;
    sol.dist.n = p.n;
    sol.dist.probs = std::move(pi);
    for (int m = 0; m <= p.n; ++m) sol.objective_value += p.objective[m] * sol.dist.probs[m];
    const Moments mo = dist_moments(sol.dist);
    sol.var_lo_active = std::abs(mo.variance - p.var_lo) < 1e-7;
    sol.var_hi_active = std::abs(mo.variance - p.var_hi) < 1e-7;
    return sol;
}

}  // namespace detail

inline LPSolution solve_moment_lp(const MomentLP& p) {
    LPSolution fail;
    const double mu = p.mean_target;
    if (mu < -detail::kFeasTol || mu > p.n + detail::kFeasTol) return fail;
    if (p.n <= 1) {
        // mean pins the distribution; variance is determined
        std::vector<double> pi(p.n + 1, 0.0);
        if (p.n == 0)
            pi[0] = 1.0;
        else {
            pi[1] = std::clamp(mu, 0.0, 1.0);
            pi[0] = 1.0 - pi[1];
        }
        return detail::finalize(p, std::move(pi));
    }
    double v_hi = std::min(p.var_hi, mu * (p.n - mu));
    const double v_lo = p.var_lo;
    if (v_lo > v_hi + 1e-9) return fail;
    v_hi = std::max(v_hi, v_lo);
    const int nv = p.n + 1;
    // columns: pi(0..n), surplus (E2 lower), slack (E2 upper)
    std::vector<std::vector<double>> A(4, std::vector<double>(nv + 2, 0.0));
    std::vector<double> b(4);
    for (int m = 0; m < nv; ++m) {
        A[0][m] = 1.0;
        A[1][m] = m;
        A[2][m] = static_cast<double>(m) * m;
        A[3][m] = static_cast<double>(m) * m;
    }
    A[2][nv] = -1.0;
    A[3][nv + 1] = 1.0;
    b[0] = 1.0;
    b[1] = mu;
    b[2] = mu * mu + v_lo;
    b[3] = mu * mu + v_hi;
    std::vector<double> c(nv + 2, 0.0);
    const double sign = (p.direction == LPDirection::maximize) ? -1.0 : 1.0;
    for (int m = 0; m < nv; ++m) c[m] = sign * p.objective[m];
    std::vector<double> x;
    if (!detail::simplex_solve(A, b, c, x)) return fail;
    x.resize(nv);
    return detail::finalize(p, std::move(x));
}

// Independent oracle: enumerate candidate supports of size <= 3 (the two
// equality constraints plus at most one active second-moment bound), solve the
// induced linear systems, filter feasibility, keep the best objective.
inline LPSolution vertex_oracle(const MomentLP& p) {
    LPSolution best;
    const double mu = p.mean_target;
    if (mu < -detail::kFeasTol || mu > p.n + detail::kFeasTol) return best;
    if (p.n <= 1) return solve_moment_lp(p);
    const double v_hi = std::max(std::min(p.var_hi, mu * (p.n - mu)), p.var_lo);
    const double v_lo = p.var_lo;
    if (v_lo > v_hi + 1e-9) return best;
    const double e2_lo = mu * mu + v_lo, e2_hi = mu * mu + v_hi;
    const double sgn = (p.direction == LPDirection::maximize) ? 1.0 : -1.0;
    auto consider = [&](const std::vector<int>& supp, const std::vector<double>& w) {
        double e2 = 0.0;
        for (std::size_t k = 0; k < supp.size(); ++k) {
            if (w[k] < -1e-8) return;
            e2 += static_cast<double>(supp[k]) * supp[k] * w[k];
        }
        if (e2 < e2_lo - 1e-7 || e2 > e2_hi + 1e-7) return;
        double obj = 0.0;
        for (std::size_t k = 0; k < supp.size(); ++k) obj += p.objective[supp[k]] * w[k];
        if (best.status == LPStatus::infeasible || sgn * obj > sgn * best.objective_value + 1e-12) {
            std::vector<double> pi(p.n + 1, 0.0);
            for (std::size_t k = 0; k < supp.size(); ++k) pi[supp[k]] = std::max(w[k], 0.0);
            best = detail::finalize(p, std::move(pi));
        }
    };
    for (int i = 0; i <= p.n; ++i) {
        if (std::abs(i - mu) < 1e-9) consider({i}, {1.0});
        for (int j = i + 1; j <= p.n; ++j) {
            // mass + mean pin a two-point distribution
            const double wj = (mu - i) / (j - i);
            consider({i, j}, {1.0 - wj, wj});
            for (int k = j + 1; k <= p.n; ++k) {
                for (double e2 : {e2_lo, e2_hi}) {
                    Eigen::Matrix3d M;
                    M << 1, 1, 1, static_cast<double>(i), static_cast<double>(j),
                        static_cast<double>(k), static_cast<double>(i) * i,
                        static_cast<double>(j) * j, static_cast<double>(k) * k;
                    Eigen::Vector3d rhs(1.0, mu, e2);
                    Eigen::Vector3d w = M.fullPivLu().solve(rhs);
                    consider({i, j, k}, {w(0), w(1), w(2)});
                    if (e2_hi - e2_lo < 1e-12) break;
                }
            }
        }
    }
    return best;
}

}  // namespace cai
