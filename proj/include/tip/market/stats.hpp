// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_MARKET_STATS_HPP
#define TIP_MARKET_STATS_HPP

#include <cstdint>
#include <vector>

namespace tip::market {

/// Sample Pearson correlation; throws ConstantInput when either input has
/// zero variance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Average ranks (1-based); ties receive the mean of the ranks they span.
std::vector<double> average_ranks(const std::vector<double>& xs);

/// Spearman = Pearson of the average ranks.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct PairedDelta {
    double mean_delta = 0.0;
    double ci_lo = 0.0;      // percentile bootstrap 95% interval
    double ci_hi = 0.0;
    double p_value = 1.0;    // two-sided paired t-test
    bool degenerate = false; // fewer than 2 samples or zero variance
};

/// Percentile bootstrap (seeded, `resamples` draws) of the mean paired
/// difference plus a two-sided paired t-test p-value.
PairedDelta paired_delta(const std::vector<double>& deltas, std::uint64_t seed,
                         int resamples = 1000);

struct RankRow {
    std::size_t rank = 0;   // 1-based
    std::size_t index = 0;  // original position
    double score = 0.0;
};

struct RankDistribution {
    std::vector<RankRow> rows;       // descending score, ties by index
    double negative_fraction = 0.0;  // share of scores < 0
};

RankDistribution rank_distribution(const std::vector<double>& scores);

}  // namespace tip::market

#endif  // TIP_MARKET_STATS_HPP
