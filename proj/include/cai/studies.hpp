#pragma once

// Simulation studies: IPW bias under a common assignment shock, size/power of
// the stratified rank test, and the calibrated sensitivity designs (Gaussian
// and heavy-tailed disturbances on a resampled covariate base).

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cai/oracle.hpp"
#include "cai/sensitivity.hpp"

namespace cai {

// Probabilists' Gauss-Hermite rule (weights sum to 1) via the Jacobi matrix.
inline void gauss_hermite(int points, std::vector<double>& nodes,
                          std::vector<double>& weights) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(points, points);
    for (int k = 1; k < points; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(double(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    nodes.resize(points);
    weights.resize(points);
    for (int k = 0; k < points; ++k) {
        nodes[k] = es.eigenvalues()(k);
        const double v = es.eigenvectors()(0, k);
        weights[k] = v * v;
    }
}

struct IpwStudyResult {
    double rho = 0.0;
    double mean_ipw = 0.0;
    double ade_target = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
    double bias_se = 0.0;  // MC standard error of the bias
};

// Units share a common logit shock eta scaled by rho, which breaks the
// conditional independence of assignments; the Horvitz-Thompson IPW estimator
// uses the true shock-marginalized propensity e(w) = E_eta[Lambda(a0+a1 w+rho
// eta)].
inline IpwStudyResult simulate_ipw_study(double rho, int n_units, int reps,
                                         std::uint64_t seed, int threads = 1,
                                         double tau0 = 0.5, double tau1 = 1.0) {
    if (rho < 0.0 || n_units < 2) throw std::invalid_argument("simulate_ipw_study: bad inputs");
    constexpr double a0 = -0.2, a1 = 0.8;
    std::vector<double> gh_x, gh_w;
    gauss_hermite(64, gh_x, gh_w);
    auto e_marginal = [&](double w) {
        double e = 0.0;
        for (std::size_t k = 0; k < gh_x.size(); ++k)
            e += gh_w[k] * logistic(a0 + a1 * w + rho * gh_x[k]);
        return e;
    };
    std::vector<double> err(reps, 0.0), est(reps, 0.0), target(reps, 0.0);
    detail::parallel_for(reps, threads, [&](int r) {
        Rng rng = Rng::stream(seed, {11, static_cast<std::uint64_t>(r)});
        const double eta = rng.normal();
        std::vector<double> w(n_units);
        std::vector<int> d(n_units);
        int treated = 0;
        for (int i = 0; i < n_units; ++i) {
            w[i] = rng.normal();
            d[i] = rng.uniform() <= logistic(a0 + a1 * w[i] + rho * eta) ? 1 : 0;
            treated += d[i];
        }
        double ipw = 0.0, pi_mean = 0.0;
        for (int i = 0; i < n_units; ++i) {
            const double pi = static_cast<double>(treated - d[i]) / (n_units - 1);
            pi_mean += pi / n_units;
            const double y = w[i] + pi + (tau0 + tau1 * pi) * d[i] + rng.normal();
            const double e = e_marginal(w[i]);
            ipw += (d[i] ? y / e : -y / (1.0 - e)) / n_units;
        }
        est[r] = ipw;
        target[r] = tau0 + tau1 * pi_mean;
        err[r] = ipw - target[r];
    });
    IpwStudyResult out;
    out.rho = rho;
    for (int r = 0; r < reps; ++r) {
        out.mean_ipw += est[r] / reps;
        out.ade_target += target[r] / reps;
        out.bias += err[r] / reps;
        out.rmse += err[r] * err[r] / reps;
    }
    out.rmse = std::sqrt(out.rmse);
    double var = 0.0;
    for (int r = 0; r < reps; ++r) var += (err[r] - out.bias) * (err[r] - out.bias);
    if (reps > 1) out.bias_se = std::sqrt(var / (reps - 1.0) / reps);
    return out;
}

struct PowerResult {
    double tau = 0.0, gamma = 0.0;
    double rate = 0.0;
    double se = 0.0;
};

namespace detail {

// Two-sided stratified-Bernoulli Monte Carlo P-value; within-stratum Bernoulli
// draws are equivalent to the two-stage mechanism with binomial counts.
inline double bernoulli_two_sided_p(const std::vector<double>& ranks,
                                    const StratifiedSample& strat,
                                    const std::vector<int>& treatments, int draws, Rng& rng) {
    double t_obs = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i)
        if (treatments[i]) t_obs += ranks[i];
    int ge = 0, le = 0;
    for (int b = 0; b < draws; ++b) {
        double t = 0.0;
        for (std::size_t i = 0; i < ranks.size(); ++i)
            if (rng.uniform() <= strat.treated_shares[strat.labels[i]]) t += ranks[i];
        if (t >= t_obs) ++ge;
        if (t <= t_obs) ++le;
    }
    const double pr = (1.0 + ge) / (draws + 1.0);
    const double pl = (1.0 + le) / (draws + 1.0);
    return std::min(1.0, 2.0 * std::min(pr, pl));
}

}  // namespace detail

// Size/power of the randomization test against direct effect tau and count-form
// exposure gamma * (number of other treated units), on a synthetic base whose
// scale mirrors an earnings-like outcome.
inline PowerResult fisher_power_study(double tau, double gamma, int n_units, int reps,
                                      int draws, std::uint64_t seed, int threads = 1,
                                      int strata_k = 6, double alpha = 0.05) {
    constexpr int kCov = 4;
    constexpr double b0 = -0.9;
    constexpr double beta[kCov] = {0.9, -0.6, 0.4, 0.5};
    constexpr double coef[kCov] = {1500.0, -800.0, 600.0, 900.0};
    constexpr double sigma = 7800.0;
    std::vector<int> rejections(reps, 0);
    detail::parallel_for(reps, threads, [&](int r) {
        Rng rng = Rng::stream(seed, {12, static_cast<std::uint64_t>(r)});
        std::vector<std::vector<double>> x(n_units, std::vector<double>(kCov));
        std::vector<int> d(n_units);
        std::vector<double> y(n_units);
        int treated = 0;
        for (int i = 0; i < n_units; ++i) {
            double lin = b0;
            double base = 0.0;
            for (int k = 0; k < kCov; ++k) {
                x[i][k] = rng.normal();
                lin += beta[k] * x[i][k];
                base += coef[k] * x[i][k];
            }
            d[i] = rng.uniform() <= logistic(lin) ? 1 : 0;
            treated += d[i];
            y[i] = base + sigma * rng.normal();
        }
        for (int i = 0; i < n_units; ++i)
            y[i] += tau * d[i] + gamma * (treated - d[i]);
        LogisticOptions opt;
        const LogisticModel model = fit_logistic(x, d, opt, nullptr);
        const StratifiedSample strat = stratify(predict_scores(model, x), d, strata_k);
        const RankVector rv = within_stratum_ranks(y, strat);
        const double p = detail::bernoulli_two_sided_p(rv.ranks, strat, d, draws, rng);
        rejections[r] = p <= alpha ? 1 : 0;
    });
    PowerResult out;
    out.tau = tau;
    out.gamma = gamma;
    out.rate = std::accumulate(rejections.begin(), rejections.end(), 0) /
               static_cast<double>(reps);
    out.se = std::sqrt(out.rate * (1.0 - out.rate) / reps);
    return out;
}

enum class CalibratedSpec { gaussian, heavy_tailed };

// Build one calibrated dataset from a base sample: bootstrap the covariate
// rows, redraw treatment from a logistic fit to the base, fit the untreated
// outcome model on base controls, and add a constant direct effect plus a
// share-form spillover zeta * (leave-one-out treated mean).
inline Dataset make_calibrated_dataset(const Dataset& base, CalibratedSpec spec,
                                       std::uint64_t seed) {
    constexpr double zeta = 3000.0, p_spike = 0.01, c_spike = 10.0;
    const double tau = (spec == CalibratedSpec::gaussian) ? 8000.0 : 4000.0;
    const std::size_t n = base.unit_count();
    const std::size_t k = base.covariate_count();
    // control-fit linear outcome model
    std::size_t n_ctrl = 0;
    for (int d : base.treatments) n_ctrl += (d == 0);
    Eigen::MatrixXd xc(n_ctrl, k + 1);
    Eigen::VectorXd yc(n_ctrl);
    std::size_t row = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (base.treatments[i]) continue;
        xc(row, 0) = 1.0;
        for (std::size_t j = 0; j < k; ++j) xc(row, j + 1) = base.covariates[i][j];
        yc(row) = base.outcomes[i];
        ++row;
    }
    const Eigen::VectorXd gamma_hat = xc.colPivHouseholderQr().solve(yc);
    const double sigma_hat =
        std::sqrt((yc - xc * gamma_hat).squaredNorm() / std::max<std::size_t>(n_ctrl - k - 1, 1));
    LogisticOptions opt;
    const LogisticModel prop = fit_logistic(base.covariates, base.treatments, opt, nullptr);

    Rng rng = Rng::stream(seed, {13});
    Dataset out;
    out.covariate_names = base.covariate_names;
    out.covariates.resize(n);
    out.treatments.resize(n);
    out.outcomes.resize(n);
    int treated = 0;
    std::vector<double> baseline(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.covariates[i] = base.covariates[rng.below(n)];
        double mean = gamma_hat(0), lin = prop.coefficients[0];
        for (std::size_t j = 0; j < k; ++j) {
            mean += gamma_hat(j + 1) * out.covariates[i][j];
            lin += prop.coefficients[j + 1] * out.covariates[i][j];
        }
        out.treatments[i] = rng.uniform() <= logistic(lin) ? 1 : 0;
        treated += out.treatments[i];
        double eps = sigma_hat * rng.normal();
        if (spec == CalibratedSpec::heavy_tailed && rng.uniform() < p_spike)
            eps += c_spike * sigma_hat;
        baseline[i] = mean + eps;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double pi = static_cast<double>(treated - out.treatments[i]) / (n - 1.0);
        out.outcomes[i] = baseline[i] + tau * out.treatments[i] + zeta * pi;
    }
    return out;
}

inline SensitivityCurve calibrated_sensitivity_study(const Dataset& base, CalibratedSpec spec,
                                                     const SensitivityConfig& cfg,
                                                     int strata_k = 6) {
    const Dataset ds = make_calibrated_dataset(base, spec, cfg.seed);
    return run_sensitivity(ds, cfg, strata_k);
}

// Moment-matched synthetic base with an earnings-like outcome scale, used when
// no external base sample is provided.
inline Dataset synthetic_base_dataset(std::uint64_t seed, int n_units = 614) {
    constexpr int kCov = 4;
    constexpr double b0 = -0.9;
    constexpr double beta[kCov] = {0.9, -0.6, 0.4, 0.5};
    constexpr double coef[kCov] = {1500.0, -800.0, 600.0, 900.0};
    constexpr double sigma = 7800.0;
    Rng rng = Rng::stream(seed, {14});
    Dataset ds;
    ds.covariate_names = {"x1", "x2", "x3", "x4"};
    ds.covariates.resize(n_units, std::vector<double>(kCov));
    ds.treatments.resize(n_units);
    ds.outcomes.resize(n_units);
    for (int i = 0; i < n_units; ++i) {
        double lin = b0, base = 0.0;
        for (int j = 0; j < kCov; ++j) {
            ds.covariates[i][j] = rng.normal();
            lin += beta[j] * ds.covariates[i][j];
            base += coef[j] * ds.covariates[i][j];
        }
        ds.treatments[i] = rng.uniform() <= logistic(lin) ? 1 : 0;
        ds.outcomes[i] = base + sigma * rng.normal();
    }
    return ds;
}

}  // namespace cai
