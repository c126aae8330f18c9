#pragma once

// Within-stratum ranks (average ranks for ties) and the stratified Wilcoxon
// rank-sum statistic T = sum_s sum_{i in s} q_i D_i. Ranks are computed once
// from the observed outcomes and held fixed across simulated reassignments.

#include <algorithm>
#include <numeric>
#include <vector>

#include "cai/propensity.hpp"

namespace cai {

struct RankVector {
    std::vector<double> ranks;  // stratum-local, 1..n_s, half-integers under ties
};

inline RankVector within_stratum_ranks(const std::vector<double>& outcomes,
                                       const StratifiedSample& strat) {
    RankVector rv;
    rv.ranks.assign(outcomes.size(), 0.0);
    for (int s = 0; s < strat.effective_K; ++s) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < outcomes.size(); ++i)
            if (strat.labels[i] == s) idx.push_back(i);
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return outcomes[a] < outcomes[b]; });
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && outcomes[idx[j + 1]] == outcomes[idx[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
            for (std::size_t k = i; k <= j; ++k) rv.ranks[idx[k]] = avg;
            i = j + 1;
        }
    }
    return rv;
}

inline double stratified_rank_sum(const RankVector& ranks, const std::vector<int>& treatments) {
    double t = 0.0;
    for (std::size_t i = 0; i < ranks.ranks.size(); ++i)
        if (treatments[i]) t += ranks.ranks[i];
    return t;
}

}  // namespace cai
