// SPDX-License-Identifier: Apache-2.0

#include "tip/market/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "tip/common/error.hpp"
#include "tip/common/rng.hpp"

namespace tip::market {

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        fail(ErrorCode::InvalidParams, "pearson needs two equal-length series");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        fail(ErrorCode::ConstantInput, "constant series has no correlation");
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) +
                                  static_cast<double>(j + 1));
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    return pearson(average_ranks(xs), average_ranks(ys));
}

PairedDelta paired_delta(const std::vector<double>& deltas, std::uint64_t seed,
                         int resamples) {
    PairedDelta out;
    const std::size_t n = deltas.size();
    if (n == 0) fail(ErrorCode::InvalidParams, "no paired differences");
    out.mean_delta =
        std::accumulate(deltas.begin(), deltas.end(), 0.0) /
        static_cast<double>(n);
    if (n < 2) {
        out.ci_lo = out.ci_hi = out.mean_delta;
        out.p_value = 1.0;
        out.degenerate = true;
        return out;
    }

    // percentile bootstrap of the mean
    Rng rng = make_rng(derive_seed(seed, 0x626f6f74ULL));  // "boot"
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (double& m : means) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += deltas[pick(rng)];
        m = s / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, means.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return means[lo] * (1 - frac) + means[hi] * frac;
    };
    out.ci_lo = quantile(0.025);
    out.ci_hi = quantile(0.975);

    double ss = 0;
    for (double d : deltas) ss += (d - out.mean_delta) * (d - out.mean_delta);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) {
        out.p_value = out.mean_delta == 0.0 ? 1.0 : 0.0;
        out.degenerate = true;
        return out;
    }
    const double t =
        out.mean_delta / (sd / std::sqrt(static_cast<double>(n)));
    const boost::math::students_t dist(static_cast<double>(n - 1));
    out.p_value = 2.0 * boost::math::cdf(dist, -std::abs(t));
    return out;
}

RankDistribution rank_distribution(const std::vector<double>& scores) {
    if (scores.empty()) fail(ErrorCode::InvalidParams, "no scores to rank");
    RankDistribution out;
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return scores[a] > scores[b];
                     });
    std::size_t negatives = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        out.rows.push_back({r + 1, order[r], scores[order[r]]});
        if (scores[order[r]] < 0.0) ++negatives;
    }
    out.negative_fraction =
        static_cast<double>(negatives) / static_cast<double>(scores.size());
    return out;
}

}  // namespace tip::market
