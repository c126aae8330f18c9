#pragma once

// End-to-end sensitivity analysis: baseline Fisher P-value under the
// stratified-Bernoulli benchmark, coordinate-descent optimization of
// per-stratum treated-count distributions subject to the dispersion bound
// Var(M_s)/(n_s e_s(1-e_s)) <= xi, P-value bounds per xi, and the robustness
// value xi* = inf{xi : upper_p(xi) > alpha}.
//
// Reproducibility design: profile draws share one random stream across all xi
// values (common random numbers), and every final bound estimate re-seeds the
// same evaluation stream. Because the feasible sets are nested in xi and the
// benchmark mechanism is feasible at every xi, bounds are chained by a running
// max (upper) / min (lower) over the mechanisms found so far plus the
// benchmark, which makes the reported curve monotone path-wise.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cai/dataset.hpp"
#include "cai/moment_lp.hpp"
#include "cai/teststat.hpp"

namespace cai {

enum class Tail { right, left, two_sided };

struct SensitivityConfig {
    std::vector<double> xi_grid{1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 8.0};
    double alpha = 0.05;
    int b_base = 50000;
    int b_inner = 2500;
    int b_final = 30000;
    int stat_draws = 2000;  // per-count sampled statistic draws (L)
    int sweeps = 10;
    int restarts = 4;  // coordinate-descent starts: benchmark + random vertices
    Tail tail = Tail::right;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct InfeasibleLP : std::runtime_error {
    int stratum;
    explicit InfeasibleLP(int s)
        : std::runtime_error("moment LP infeasible in stratum " + std::to_string(s)),
          stratum(s) {}
};

struct StratumData {
    int n = 0;
    double e_hat = 0.0;
    std::vector<double> q;               // within-stratum ranks of member units
    std::vector<std::size_t> members;    // dataset indices
    ConditionalStatTable table;
};

struct Problem {
    std::vector<StratumData> strata;  // strata with e_hat strictly inside (0,1)
    double t_obs = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

// random-stream path keys
constexpr std::uint64_t kTables = 1, kBase = 2, kProfile = 3, kFinal = 4;

inline void parallel_for(int njobs, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || njobs <= 1) {
        for (int j = 0; j < njobs; ++j) fn(j);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex err_mu;
    auto work = [&] {
        for (;;) {
            const int j = next.fetch_add(1);
            if (j >= njobs) return;
            try {
                fn(j);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int k = std::min(threads, njobs);
    pool.reserve(k);
    for (int t = 0; t < k; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline double draw_total(const Problem& pr, const MechanismSet& mech, Rng& rng) {
    double t = 0.0;
    for (std::size_t s = 0; s < pr.strata.size(); ++s) {
        const int m = static_cast<int>(draw_index(mech.dists[s].probs, rng.uniform()));
        t += pr.strata[s].table.draw(m, rng);
    }
    return t;
}

inline bool extreme(double t, double t_obs, Tail tail) {
    return tail == Tail::left ? (t <= t_obs) : (t >= t_obs);
}

}  // namespace detail

inline MechanismSet benchmark_mechanisms(const Problem& pr) {
    MechanismSet mech;
    for (const auto& sd : pr.strata) mech.dists.push_back(binomial_count_dist(sd.n, sd.e_hat));
    return mech;
}

inline Problem build_problem(const std::vector<double>& outcomes,
                             const std::vector<int>& treatments, const StratifiedSample& strat,
                             int stat_draws, std::uint64_t seed) {
    int treated = 0;
    for (int d : treatments) treated += d;
    if (treated == 0 || treated == static_cast<int>(treatments.size()))
        throw DataError("all units share one treatment arm; nothing to randomize");
    const RankVector rv = within_stratum_ranks(outcomes, strat);
    Problem pr;
    for (int s = 0; s < strat.effective_K; ++s) {
        StratumData sd;
        for (std::size_t i = 0; i < treatments.size(); ++i)
            if (strat.labels[i] == s) {
                sd.members.push_back(i);
                sd.q.push_back(rv.ranks[i]);
            }
        sd.n = static_cast<int>(sd.members.size());
        sd.e_hat = strat.treated_shares[s];
        if (sd.e_hat <= 0.0 || sd.e_hat >= 1.0) {
            pr.warnings.push_back("stratum " + std::to_string(s) +
                                  " has no treatment variation; excluded from the statistic");
            continue;
        }
        Rng rng = Rng::stream(seed, {detail::kTables, static_cast<std::uint64_t>(s)});
        sd.table = precompute_conditional_stats(sd.q, stat_draws, rng);
        for (std::size_t k = 0; k < sd.members.size(); ++k)
            if (treatments[sd.members[k]]) pr.t_obs += sd.q[k];
        pr.strata.push_back(std::move(sd));
    }
    if (pr.strata.empty()) throw DataError("no stratum retains treatment variation");
    return pr;
}

inline double estimate_pvalue(const Problem& pr, const MechanismSet& mech, int draws,
                              std::uint64_t seed, Tail tail) {
    Rng rng = Rng::stream(seed, {detail::kFinal, tail == Tail::left ? 1ull : 0ull});
    int count = 0;
    for (int b = 0; b < draws; ++b)
        if (detail::extreme(detail::draw_total(pr, mech, rng), pr.t_obs, tail)) ++count;
    return (1.0 + count) / (draws + 1.0);
}

inline double baseline_pvalue(const Problem& pr, int b_base, std::uint64_t seed, Tail tail) {
    const MechanismSet mech = benchmark_mechanisms(pr);
    Rng rng = Rng::stream(seed, {detail::kBase, tail == Tail::left ? 1ull : 0ull});
    int count = 0;
    for (int b = 0; b < b_base; ++b)
        if (detail::extreme(detail::draw_total(pr, mech, rng), pr.t_obs, tail)) ++count;
    return (1.0 + count) / (b_base + 1.0);
}

// a(m) ~= Pr(T extreme | M_s = m): B_inner draws of the other strata's
// contributions, shared across all m, combined with stratum s's conditional
// statistic table.
inline std::vector<double> conditional_rejection_profile(const Problem& pr, std::size_t s,
                                                         const MechanismSet& mech, int b_inner,
                                                         Rng& rng, Tail tail) {
    const auto& sd = pr.strata[s];
    std::vector<double> rest(b_inner, 0.0);
    for (int b = 0; b < b_inner; ++b)
        for (std::size_t r = 0; r < pr.strata.size(); ++r) {
            if (r == s) continue;
            const int m = static_cast<int>(draw_index(mech.dists[r].probs, rng.uniform()));
            rest[b] += pr.strata[r].table.draw(m, rng);
        }
    std::vector<double> a(sd.n + 1, 0.0);
    for (int m = 0; m <= sd.n; ++m) {
        double acc = 0.0;
        for (int b = 0; b < b_inner; ++b)
            acc += (tail == Tail::left) ? sd.table.tail_le(m, pr.t_obs - rest[b])
                                        : sd.table.tail(m, pr.t_obs - rest[b]);
        a[m] = acc / b_inner;
    }
    return a;
}

namespace detail {

inline MomentLP stratum_lp(const StratumData& sd, double xi, LPDirection dir) {
    MomentLP lp;
    lp.n = sd.n;
    lp.mean_target = sd.n * sd.e_hat;
    const double var_b = sd.n * sd.e_hat * (1.0 - sd.e_hat);
    lp.var_lo = var_b;
    lp.var_hi = std::min(xi * var_b, lp.mean_target * (sd.n - lp.mean_target));
    lp.direction = dir;
    return lp;
}

// One coordinate-descent run from a given initial mechanism set. Profile
// streams are keyed by (direction, tail, restart, sweep, stratum) only, so
// every xi sees the same draws.
inline MechanismSet descend(const Problem& pr, double xi, const SensitivityConfig& cfg,
                            LPDirection dir, Tail tail, int restart, MechanismSet mech) {
    std::vector<double> last_obj(pr.strata.size(), std::numeric_limits<double>::quiet_NaN());
    const std::uint64_t dir_key = (dir == LPDirection::maximize) ? 1 : 0;
    const std::uint64_t tail_key = (tail == Tail::left) ? 1 : 0;
    for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
        double max_delta = 0.0;
        for (std::size_t s = 0; s < pr.strata.size(); ++s) {
            Rng rng = Rng::stream(cfg.seed, {kProfile, dir_key, tail_key,
                                             static_cast<std::uint64_t>(restart),
                                             static_cast<std::uint64_t>(sweep),
                                             static_cast<std::uint64_t>(s)});
            MomentLP lp = stratum_lp(pr.strata[s], xi, dir);
            lp.objective = conditional_rejection_profile(pr, s, mech, cfg.b_inner, rng, tail);
            const LPSolution sol = solve_moment_lp(lp);
            if (sol.status != LPStatus::optimal) throw InfeasibleLP(static_cast<int>(s));
            if (!std::isnan(last_obj[s]))
                max_delta = std::max(max_delta, std::abs(sol.objective_value - last_obj[s]));
            else
                max_delta = 1.0;
            last_obj[s] = sol.objective_value;
            mech.dists[s] = sol.dist;
        }
        if (max_delta <= 1e-4) break;
    }
    return mech;
}

}  // namespace detail

// Multi-start coordinate descent: the objective is multilinear in the
// per-stratum distributions, so a single descent can stall at a coordinate-wise
// optimum. Start from the benchmark plus random polytope vertices (moment LP
// optima under random objectives) and keep the best run under common random
// numbers.
inline MechanismSet optimize_mechanisms(const Problem& pr, double xi,
                                        const SensitivityConfig& cfg, LPDirection dir,
                                        Tail tail) {
    const double sgn = (dir == LPDirection::maximize) ? 1.0 : -1.0;
    MechanismSet best;
    double best_val = 0.0;
    for (int restart = 0; restart < std::max(cfg.restarts, 1); ++restart) {
        MechanismSet init = benchmark_mechanisms(pr);
        if (restart > 0) {
            Rng rng = Rng::stream(cfg.seed, {detail::kProfile, 7,
                                             static_cast<std::uint64_t>(restart)});
            for (std::size_t s = 0; s < pr.strata.size(); ++s) {
                MomentLP lp = detail::stratum_lp(pr.strata[s], xi, LPDirection::maximize);
                lp.objective.resize(pr.strata[s].n + 1);
                for (double& a : lp.objective) a = rng.uniform();
                const LPSolution sol = solve_moment_lp(lp);
                if (sol.status == LPStatus::optimal) init.dists[s] = sol.dist;
            }
        }
        const MechanismSet mech =
            detail::descend(pr, xi, cfg, dir, tail, restart, std::move(init));
        const double val = estimate_pvalue(pr, mech, cfg.b_inner, cfg.seed, tail);
        if (restart == 0 || sgn * val > sgn * best_val) {
            best = mech;
            best_val = val;
        }
    }
    return best;
}

struct BoundPair {
    double lower_p = 0.0;
    double upper_p = 0.0;
    MechanismSet lower_mech, upper_mech;
};

// One xi in isolation (no cross-xi chaining); the curve runner below applies
// the chaining. At xi=1 the dispersion band collapses onto the benchmark, so
// both bounds equal the baseline P-value by construction.
inline BoundPair optimize_bounds(const Problem& pr, double xi, const SensitivityConfig& cfg,
                                 Tail tail) {
    BoundPair out;
    if (xi <= 1.0) {
        const double p = baseline_pvalue(pr, cfg.b_base, cfg.seed, tail);
        out.lower_p = out.upper_p = p;
        out.lower_mech = out.upper_mech = benchmark_mechanisms(pr);
        return out;
    }
    out.upper_mech = optimize_mechanisms(pr, xi, cfg, LPDirection::maximize, tail);
    out.lower_mech = optimize_mechanisms(pr, xi, cfg, LPDirection::minimize, tail);
    out.upper_p = estimate_pvalue(pr, out.upper_mech, cfg.b_final, cfg.seed, tail);
    out.lower_p = estimate_pvalue(pr, out.lower_mech, cfg.b_final, cfg.seed, tail);
    return out;
}

// Bonferroni combination of one-sided bound pairs computed at the same xi.
inline BoundPair two_sided_bounds(const BoundPair& right, const BoundPair& left) {
    BoundPair out;
    out.upper_p = std::min(1.0, 2.0 * std::min(right.upper_p, left.upper_p));
    out.lower_p = std::min(1.0, 2.0 * std::min(right.lower_p, left.lower_p));
    out.upper_mech = (right.upper_p <= left.upper_p) ? right.upper_mech : left.upper_mech;
    out.lower_mech = (right.lower_p <= left.lower_p) ? right.lower_mech : left.lower_mech;
    return out;
}

struct XiPoint {
    double xi = 1.0;
    double lower_p = 0.0, upper_p = 0.0;
    double lower_se = 0.0, upper_se = 0.0;
    MechanismSet lower_mech, upper_mech;
};

struct SensitivityCurve {
    double t_obs = 0.0;
    double baseline_p = 0.0;
    double baseline_se = 0.0;
    std::vector<XiPoint> points;
    std::optional<double> robustness_value;
    bool uninformative = false;        // baseline already exceeds alpha
    bool robust_beyond_grid = false;   // no grid point exceeds alpha
    std::vector<std::string> warnings;
};

// Grid-resolution robustness value: smallest grid xi whose upper bound exceeds
// alpha. Returns 1 (uninformative) when the baseline already exceeds alpha and
// nothing when the whole grid stays below.
inline std::optional<double> robustness_value(const SensitivityCurve& curve, double alpha) {
    if (curve.baseline_p > alpha) return 1.0;
    for (const auto& pt : curve.points)
        if (pt.upper_p > alpha) return pt.xi;
    return std::nullopt;
}

namespace detail {

inline double mc_se(double p, int draws) { return std::sqrt(p * (1.0 - p) / draws); }

// Upper bound at an off-grid probe xi (used by the bisection refinement).
inline double probe_upper(const Problem& pr, double xi, const SensitivityConfig& cfg,
                          double base_right, double base_left) {
    auto one = [&](Tail t, double base) {
        const MechanismSet mech = optimize_mechanisms(pr, xi, cfg, LPDirection::maximize, t);
        return std::max(base, estimate_pvalue(pr, mech, cfg.b_final, cfg.seed, t));
    };
    if (cfg.tail == Tail::two_sided)
        return std::min(1.0, 2.0 * std::min(one(Tail::right, base_right),
                                            one(Tail::left, base_left)));
    const Tail t = (cfg.tail == Tail::left) ? Tail::left : Tail::right;
    return one(t, cfg.tail == Tail::left ? base_left : base_right);
}

}  // namespace detail

inline SensitivityCurve run_sensitivity_problem(const Problem& pr,
                                                const SensitivityConfig& cfg) {
    SensitivityCurve curve;
    curve.t_obs = pr.t_obs;
    curve.warnings = pr.warnings;
    const bool two = (cfg.tail == Tail::two_sided);
    const double base_right = (two || cfg.tail == Tail::right)
                                  ? baseline_pvalue(pr, cfg.b_base, cfg.seed, Tail::right)
                                  : 0.0;
    const double base_left = (two || cfg.tail == Tail::left)
                                 ? baseline_pvalue(pr, cfg.b_base, cfg.seed, Tail::left)
                                 : 0.0;
    curve.baseline_p = two ? std::min(1.0, 2.0 * std::min(base_right, base_left))
                           : (cfg.tail == Tail::left ? base_left : base_right);
    curve.baseline_se = detail::mc_se(curve.baseline_p, cfg.b_base);

    const int nxi = static_cast<int>(cfg.xi_grid.size());
    std::vector<BoundPair> raw_right(nxi), raw_left(nxi);
    std::vector<Tail> tails;
    if (two) {
        tails = {Tail::right, Tail::left};
    } else {
        tails = {cfg.tail};
    }
    const int njobs = nxi * static_cast<int>(tails.size());
    detail::parallel_for(njobs, cfg.threads, [&](int job) {
        const int j = job % nxi;
        const Tail t = tails[job / nxi];
        auto& slot = (t == Tail::left) ? raw_left[j] : raw_right[j];
        slot = optimize_bounds(pr, cfg.xi_grid[j], cfg, t);
    });

    // Chain per tail: running max for the upper bound and min for the lower,
    // floored/capped by the benchmark value (feasible at every xi).
    auto chain = [&](std::vector<BoundPair>& raw, double base) {
        double up = base, lo = base;
        MechanismSet up_mech = benchmark_mechanisms(pr), lo_mech = up_mech;
        for (auto& bp : raw) {
            if (bp.upper_p > up) {
                up = bp.upper_p;
                up_mech = bp.upper_mech;
            }
            if (bp.lower_p < lo) {
                lo = bp.lower_p;
                lo_mech = bp.lower_mech;
            }
            bp.upper_p = up;
            bp.lower_p = lo;
            bp.upper_mech = up_mech;
            bp.lower_mech = lo_mech;
        }
    };
    if (two || cfg.tail == Tail::right) chain(raw_right, base_right);
    if (two || cfg.tail == Tail::left) chain(raw_left, base_left);

    for (int j = 0; j < nxi; ++j) {
        const BoundPair bp = two ? two_sided_bounds(raw_right[j], raw_left[j])
                                 : (cfg.tail == Tail::left ? raw_left[j] : raw_right[j]);
        XiPoint pt;
        pt.xi = cfg.xi_grid[j];
        pt.lower_p = bp.lower_p;
        pt.upper_p = bp.upper_p;
        pt.lower_mech = bp.lower_mech;
        pt.upper_mech = bp.upper_mech;
        const int draws = (pt.xi <= 1.0) ? cfg.b_base : cfg.b_final;
        pt.lower_se = detail::mc_se(pt.lower_p, draws);
        pt.upper_se = detail::mc_se(pt.upper_p, draws);
        curve.points.push_back(std::move(pt));
    }

    const std::optional<double> grid_rv = robustness_value(curve, cfg.alpha);
    if (curve.baseline_p > cfg.alpha) {
        curve.uninformative = true;
        curve.robustness_value = 1.0;
    } else if (!grid_rv) {
        curve.robust_beyond_grid = true;
    } else {
        // one bisection pass (up to 3 probes) between the bracketing grid points
        double hi = *grid_rv, lo = 1.0;
        for (const auto& pt : curve.points) {
            if (pt.xi >= hi) break;
            lo = pt.xi;
        }
        for (int probe = 0; probe < 3 && hi - lo > 1e-3; ++probe) {
            const double mid = 0.5 * (lo + hi);
            if (detail::probe_upper(pr, mid, cfg, base_right, base_left) > cfg.alpha)
                hi = mid;
            else
                lo = mid;
        }
        curve.robustness_value = hi;
    }
    return curve;
}

struct SensSchema {
    std::string outcome, treatment;
    std::vector<std::string> covariates;
};

inline SensitivityCurve run_sensitivity(const Dataset& ds, const SensitivityConfig& cfg,
                                        int strata_k) {
    LogisticOptions opt;
    const LogisticModel model =
        fit_logistic(ds.covariates, ds.treatments, opt, &ds.covariate_names);
    const std::vector<double> scores = predict_scores(model, ds.covariates);
    const StratifiedSample strat = stratify(scores, ds.treatments, strata_k);
    const Problem pr = build_problem(ds.outcomes, ds.treatments, strat, cfg.stat_draws, cfg.seed);
    SensitivityCurve curve = run_sensitivity_problem(pr, cfg);
    if (!model.converged)
        curve.warnings.push_back("propensity model did not converge; scores may be unstable");
    return curve;
}

}  // namespace cai
