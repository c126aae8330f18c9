#pragma once

// Propensity estimation and stratification: logistic regression by IRLS,
// quantile binning of the fitted scores, and standardized-mean-difference
// balance diagnostics.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cai/dataset.hpp"

namespace cai {

struct LogisticModel {
    std::vector<double> coefficients;  // intercept first
    bool converged = false;
    int iterations = 0;
    double final_gradient_norm = 0.0;
};

struct LogisticOptions {
    int max_iter = 100;
    double tolerance = 1e-8;          // on the gradient max-norm
    double separation_norm = 1e4;     // coefficient max-norm triggering the separation error
};

struct SeparationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RankDeficientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {
inline Eigen::MatrixXd design_matrix(const std::vector<std::vector<double>>& covariates,
                                     std::size_t rows) {
    const std::size_t p = covariates.empty() ? 0 : covariates[0].size();
    Eigen::MatrixXd x(rows, p + 1);
    for (std::size_t i = 0; i < rows; ++i) {
        x(i, 0) = 1.0;
        for (std::size_t j = 0; j < p; ++j) x(i, j + 1) = covariates[i][j];
    }
    return x;
}
}  // namespace detail

inline LogisticModel fit_logistic(const std::vector<std::vector<double>>& covariates,
                                  const std::vector<int>& treatments,
                                  const LogisticOptions& opt = {},
                                  const std::vector<std::string>* names = nullptr) {
    const std::size_t n = treatments.size();
    if (n == 0) throw DataError("fit_logistic: empty data");
    const Eigen::MatrixXd x = detail::design_matrix(covariates, n);
    const auto p1 = static_cast<std::size_t>(x.cols());

    {   // rank check on the design: scanning left to right names the first
        // column that adds nothing to the ones before it
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
        for (long j = 1; j < static_cast<long>(p1); ++j) {
            qr.compute(x.leftCols(j + 1));
            qr.setThreshold(1e-10);
            if (qr.rank() <= j) {
                std::string which = names && static_cast<std::size_t>(j - 1) < names->size()
                                        ? (*names)[static_cast<std::size_t>(j - 1)]
                                        : "column " + std::to_string(j);
                throw RankDeficientError("fit_logistic: rank-deficient design, collinear: " +
                                         which);
            }
        }
    }

    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) y(static_cast<long>(i)) = treatments[i];

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<long>(p1));
    LogisticModel model;
    for (int it = 1; it <= opt.max_iter; ++it) {
        Eigen::VectorXd eta = x * beta;
        Eigen::VectorXd mu = eta.unaryExpr([](double v) { return logistic(v); });
        Eigen::VectorXd grad = x.transpose() * (y - mu);
        model.iterations = it;
        model.final_gradient_norm = grad.lpNorm<Eigen::Infinity>();
        if (model.final_gradient_norm <= opt.tolerance) {
            model.converged = true;
            break;
        }
        Eigen::VectorXd w = mu.array() * (1.0 - mu.array()) + 1e-12;
        Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x;
        beta += h.ldlt().solve(grad);
        if (beta.lpNorm<Eigen::Infinity>() > opt.separation_norm)
            throw SeparationError("fit_logistic: diverging coefficients (perfect separation?)");
    }
    {   // fitted probabilities numerically equal to the outcomes mean the
        // likelihood has no interior maximum: the classes are separated
        const Eigen::VectorXd mu =
            (x * beta).unaryExpr([](double v) { return logistic(v); });
        if ((y - mu).lpNorm<Eigen::Infinity>() < 1e-6)
            throw SeparationError("fit_logistic: perfect separation, coefficients diverge");
    }
    model.coefficients.assign(beta.data(), beta.data() + beta.size());
    return model;
}

inline std::vector<double> predict_scores(const LogisticModel& model,
                                          const std::vector<std::vector<double>>& covariates) {
    const std::size_t p = covariates.empty() ? 0 : covariates[0].size();
    if (p + 1 != model.coefficients.size())
        throw DataError("predict_scores: covariate dimension mismatch");
    std::vector<double> scores(covariates.size());
    for (std::size_t i = 0; i < covariates.size(); ++i) {
        double eta = model.coefficients[0];
        for (std::size_t j = 0; j < p; ++j) eta += model.coefficients[j + 1] * covariates[i][j];
        // keep fitted scores strictly inside (0,1)
        scores[i] = std::clamp(logistic(eta), 1e-12, 1.0 - 1e-12);
    }
    return scores;
}

struct StratifiedSample {
    std::vector<int> labels;            // 0-based stratum index per unit
    std::vector<int> stratum_sizes;     // n_s
    std::vector<double> treated_shares; // e_hat_s
    int effective_K = 0;
};

namespace detail {
// Type-7 quantile (linear interpolation of order statistics).
inline double quantile7(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}
}  // namespace detail

// Quantile binning of scores with ties sent to the lower bin; K is reduced
// until every bin is nonempty.
inline StratifiedSample stratify(const std::vector<double>& scores,
                                 const std::vector<int>& treatments, int requested_K) {
    if (scores.empty()) throw DataError("stratify: no scores");
    if (requested_K < 1) throw DataError("stratify: K must be >= 1");
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());

    StratifiedSample strat;
    for (int K = requested_K; K >= 1; --K) {
        std::vector<double> cuts;
        for (int j = 1; j < K; ++j)
            cuts.push_back(detail::quantile7(sorted, static_cast<double>(j) / K));
        std::vector<int> labels(scores.size());
        std::vector<int> sizes(static_cast<std::size_t>(K), 0);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            int lab = 0;
            for (double c : cuts) lab += scores[i] > c ? 1 : 0;
            labels[i] = lab;
            sizes[static_cast<std::size_t>(lab)]++;
        }
        if (std::any_of(sizes.begin(), sizes.end(), [](int s) { return s == 0; })) continue;
        strat.labels = std::move(labels);
        strat.stratum_sizes = std::move(sizes);
        strat.effective_K = K;
        break;
    }
    strat.treated_shares.assign(static_cast<std::size_t>(strat.effective_K), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i)
        strat.treated_shares[static_cast<std::size_t>(strat.labels[i])] += treatments[i];
    for (int s = 0; s < strat.effective_K; ++s)
        strat.treated_shares[static_cast<std::size_t>(s)] /= strat.stratum_sizes[static_cast<std::size_t>(s)];
    return strat;
}

struct BalanceEntry {
    int stratum = 0;                 // 0-based
    std::string covariate;
    double smd = 0.0;                // (mean_t - mean_c) / pooled sd
    bool defined = true;             // false when a stratum lacks treated or control units
    std::string flag;                // "no-treated" / "no-control" when undefined
};

inline std::vector<BalanceEntry> balance_report(const Dataset& ds, const StratifiedSample& strat) {
    std::vector<BalanceEntry> out;
    const std::size_t p = ds.covariate_count();
    for (int s = 0; s < strat.effective_K; ++s) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.unit_count(); ++i)
            if (strat.labels[i] == s) idx.push_back(i);
        std::size_t nt = 0;
        for (std::size_t i : idx) nt += static_cast<std::size_t>(ds.treatments[i]);
        const std::size_t nc = idx.size() - nt;
        for (std::size_t j = 0; j < p; ++j) {
            BalanceEntry e;
            e.stratum = s;
            e.covariate = ds.covariate_names[j];
            if (nt == 0 || nc == 0) {
                e.defined = false;
                e.flag = nt == 0 ? "no-treated" : "no-control";
                out.push_back(e);
                continue;
            }
            double mt = 0, mc = 0;
            for (std::size_t i : idx) (ds.treatments[i] ? mt : mc) += ds.covariates[i][j];
            mt /= static_cast<double>(nt);
            mc /= static_cast<double>(nc);
            double vt = 0, vc = 0;
            for (std::size_t i : idx) {
                const double d = ds.covariates[i][j] - (ds.treatments[i] ? mt : mc);
                (ds.treatments[i] ? vt : vc) += d * d;
            }
            vt = nt > 1 ? vt / static_cast<double>(nt - 1) : 0.0;
            vc = nc > 1 ? vc / static_cast<double>(nc - 1) : 0.0;
            const double pooled = std::sqrt(0.5 * (vt + vc));
            e.smd = pooled > 0 ? (mt - mc) / pooled : 0.0;
            out.push_back(e);
        }
    }
    return out;
}

}  // namespace cai
