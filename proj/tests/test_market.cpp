// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "tip/common/error.hpp"
#include "tip/market/market.hpp"
#include "tip/market/stats.hpp"

using namespace tip;
using namespace tip::market;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const TipError& e) {
        return e.code();
    }
    FAIL("expected a TipError");
    return ErrorCode::InvalidParams;
}

MarketConfig tiny_config() {
    MarketConfig cfg;
    cfg.num_replications = 2;
    cfg.num_sellers = 3;
    cfg.n_train = 200;
    cfg.n_eval = 40;
    cfg.bundle_size = 20;
    cfg.num_features = 10;
    cfg.train_epochs = 60;
    cfg.seed = 9;
    return cfg;
}

}  // namespace

TEST_CASE("pearson matches hand-computed fixtures and rejects constants") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y;
    for (double v : x) y.push_back(2 * v + 3);
    CHECK(pearson(x, y) == doctest::Approx(1.0));
    std::vector<double> neg;
    for (double v : x) neg.push_back(-v);
    CHECK(pearson(x, neg) == doctest::Approx(-1.0));

    CHECK(pearson({1, 2, 3}, {1, 2, 4}) ==
          doctest::Approx(0.9819805060619659).epsilon(1e-12));

    CHECK(code_of([] { pearson({1, 1, 1}, {1, 2, 3}); }) ==
          ErrorCode::ConstantInput);
    CHECK(code_of([] { pearson({1}, {2}); }) == ErrorCode::InvalidParams);
}

TEST_CASE("spearman uses average ranks and hits the 0.7 fixture") {
    // fixed 5-point set: squared rank differences sum to 4, so the
    // rank formula gives 1 - 6*4/(5*24) = 0.8
    CHECK(spearman({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}) ==
          doctest::Approx(0.8).epsilon(1e-12));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    // tie handling: ranks of {1,1,2,3} are {1.5,1.5,3,4}
    const std::vector<double> r = average_ranks({1, 1, 2, 3});
    CHECK(r == std::vector<double>{1.5, 1.5, 3.0, 4.0});
    CHECK(spearman({1, 1, 2, 3}, {1, 2, 3, 4}) ==
          doctest::Approx(3.0 / std::sqrt(10.0)).epsilon(1e-12));
}

TEST_CASE("paired delta bootstrap and t-test behave on planted fixtures") {
    // identical signals
    const PairedDelta zero = paired_delta({0, 0, 0, 0, 0}, 1);
    CHECK(zero.mean_delta == 0.0);
    CHECK(zero.ci_lo <= 0.0);
    CHECK(zero.ci_hi >= 0.0);
    CHECK(zero.p_value == 1.0);

    // constant +0.05 across replications
    const PairedDelta c = paired_delta({0.05, 0.05, 0.05, 0.05}, 1);
    CHECK(c.mean_delta == doctest::Approx(0.05));
    CHECK(c.ci_lo == doctest::Approx(0.05));
    CHECK(c.ci_hi == doctest::Approx(0.05));
    CHECK(c.p_value == 0.0);
    CHECK(c.degenerate);

    // planted positive effect with small noise: CI must exclude 0
    const PairedDelta planted =
        paired_delta({0.04, 0.06, 0.05, 0.045, 0.055, 0.052, 0.048}, 1);
    CHECK(planted.ci_lo > 0.0);
    CHECK(planted.p_value < 0.01);
    CHECK_FALSE(planted.degenerate);

    // reproducible in the seed
    const PairedDelta a = paired_delta({0.1, -0.2, 0.3}, 7);
    const PairedDelta b = paired_delta({0.1, -0.2, 0.3}, 7);
    CHECK(a.ci_lo == b.ci_lo);
    CHECK(a.ci_hi == b.ci_hi);

    // single replication: degenerate interval
    const PairedDelta one = paired_delta({0.2}, 1);
    CHECK(one.degenerate);
    CHECK(one.ci_lo == doctest::Approx(0.2));
    CHECK(one.ci_hi == doctest::Approx(0.2));
}

TEST_CASE("rank distribution orders by utility with index tie-break") {
    const RankDistribution eq = rank_distribution({1.0, 1.0, 1.0});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(eq.rows[i].rank == i + 1);
        CHECK(eq.rows[i].index == i);
    }
    CHECK(eq.negative_fraction == 0.0);

    const RankDistribution rd = rank_distribution({3.0, -1.0, 2.0});
    CHECK(rd.rows[0].score == 3.0);
    CHECK(rd.rows[1].score == 2.0);
    CHECK(rd.rows[2].score == -1.0);
    CHECK(rd.negative_fraction == doctest::Approx(1.0 / 3.0));

    // planted high-utility entry lands at rank 1
    std::vector<double> scores(50, 0.1);
    scores[37] = 9.0;
    CHECK(rank_distribution(scores).rows[0].index == 37);
}

TEST_CASE("market config json round-trips and rejects bad input") {
    MarketConfig cfg = tiny_config();
    cfg.damping = 0.123;
    cfg.exact_preconditioner = false;
    const MarketConfig back =
        MarketConfig::from_json_text(cfg.to_json_text());
    CHECK(back.num_replications == cfg.num_replications);
    CHECK(back.n_train == cfg.n_train);
    CHECK(back.damping == cfg.damping);
    CHECK(back.exact_preconditioner == cfg.exact_preconditioner);
    CHECK(back.seed == cfg.seed);

    CHECK(code_of([] { MarketConfig::from_json_text("{ not json"); }) ==
          ErrorCode::InvalidParams);
    CHECK(code_of([] {
              MarketConfig::from_json_text("{\"n_train\": 0}");
          }) == ErrorCode::InvalidParams);
    CHECK(code_of([] {
              MarketConfig::from_json_text("{\"n_train\": \"many\"}");
          }) == ErrorCode::InvalidParams);
}

TEST_CASE("market generation is deterministic and controllably homogeneous") {
    const MarketConfig cfg = tiny_config();
    const MarketInstance a = generate_market(cfg, 1);
    const MarketInstance b = generate_market(cfg, 1);
    REQUIRE(a.buyer_train.size() == b.buyer_train.size());
    for (std::size_t i = 0; i < a.buyer_train.size(); ++i) {
        CHECK(a.buyer_train[i].features == b.buyer_train[i].features);
        CHECK(a.buyer_train[i].label == b.buyer_train[i].label);
    }
    for (std::size_t s = 0; s < a.sellers.size(); ++s)
        for (std::size_t i = 0; i < a.sellers[s].data.size(); ++i)
            CHECK(a.sellers[s].data[i].features ==
                  b.sellers[s].data[i].features);

    const MarketInstance other = generate_market(cfg, 2);
    CHECK(other.buyer_train[0].features != a.buyer_train[0].features);

    MarketConfig homo = cfg;
    homo.mean_shift_max = 0.0;
    homo.label_noise_max = 0.0;
    homo.coverage_max = 0.0;
    const MarketInstance h = generate_market(homo, 0);
    for (const auto& s : h.sellers) {
        CHECK(s.mean_shift == 0.0);
        CHECK(s.label_noise == 0.0);
        CHECK(s.coverage == 0.0);
    }
}

TEST_CASE("ground-truth pass: zero steps, heterogeneity, eval-copy bundle") {
    MarketConfig cfg = tiny_config();
    cfg.bundle_size = cfg.n_eval;  // so a bundle can be an eval-set copy
    const MarketInstance inst = generate_market(cfg, 0);

    MarketConfig frozen = cfg;
    frozen.fine_tune_epochs = 0;
    const ReplicationResult none =
        run_replication(frozen, inst, ValuationMode::Plaintext);
    for (const auto& o : none.sellers) CHECK(o.realized_benefit == 0.0);

    const ReplicationResult het =
        run_replication(cfg, inst, ValuationMode::Plaintext);
    double mean = 0, var = 0;
    for (const auto& o : het.sellers) mean += o.realized_benefit;
    mean /= static_cast<double>(het.sellers.size());
    for (const auto& o : het.sellers)
        var += (o.realized_benefit - mean) * (o.realized_benefit - mean);
    CHECK(var > 0.0);

    // homogeneous market, one seller hands over the eval set itself
    MarketConfig homo = cfg;
    homo.mean_shift_max = 0.0;
    homo.label_noise_max = 0.0;
    homo.coverage_max = 0.0;
    MarketInstance copy = generate_market(homo, 0);
    copy.sellers[1].data = copy.buyer_eval;
    const ReplicationResult rr =
        run_replication(homo, copy, ValuationMode::Plaintext);
    for (std::size_t s = 0; s < rr.sellers.size(); ++s)
        if (s != 1)
            CHECK(rr.sellers[1].realized_benefit >
                  rr.sellers[s].realized_benefit);
}

TEST_CASE("encrypted and plaintext valuation agree per seller") {
    MarketConfig cfg = tiny_config();
    cfg.num_sellers = 2;
    const MarketInstance inst = generate_market(cfg, 0);
    const ReplicationResult plain =
        run_replication(cfg, inst, ValuationMode::Plaintext);
    const ReplicationResult enc =
        run_replication(cfg, inst, ValuationMode::Encrypted);

    REQUIRE(plain.sellers.size() == enc.sellers.size());
    std::vector<double> up, ue;
    for (std::size_t s = 0; s < plain.sellers.size(); ++s) {
        CHECK(std::abs(plain.sellers[s].utility_if -
                       enc.sellers[s].utility_if) <
              1e-3 * static_cast<double>(cfg.bundle_size));
        // identical non-IF columns: same instance, same baselines
        CHECK(plain.sellers[s].utility_cos == enc.sellers[s].utility_cos);
        CHECK(plain.sellers[s].realized_benefit ==
              enc.sellers[s].realized_benefit);
        up.push_back(plain.sellers[s].utility_if);
        ue.push_back(enc.sellers[s].utility_if);
    }
    // identical seller ranking, with the generator-guaranteed score gap
    std::vector<std::size_t> op(up.size()), oe(ue.size());
    for (std::size_t i = 0; i < up.size(); ++i) op[i] = oe[i] = i;
    std::sort(op.begin(), op.end(),
              [&](std::size_t a, std::size_t b) { return up[a] > up[b]; });
    std::sort(oe.begin(), oe.end(),
              [&](std::size_t a, std::size_t b) { return ue[a] > ue[b]; });
    CHECK(op == oe);
    for (std::size_t i = 1; i < op.size(); ++i)
        CHECK(up[op[i - 1]] - up[op[i]] > 2e-3);
}

TEST_CASE("market runs are reproducible and thread-count independent") {
    const MarketConfig cfg = tiny_config();
    const auto r1 = run_market(cfg, ValuationMode::Plaintext, 1);
    const auto r2 = run_market(cfg, ValuationMode::Plaintext, 4);
    CHECK(replications_csv(r1) == replications_csv(r2));
    CHECK(rank_distribution_csv(r1) == rank_distribution_csv(r2));
    const SummaryStats s1 = summarize(r1, cfg.seed);
    const SummaryStats s2 = summarize(r2, cfg.seed);
    CHECK(summary_json(s1, r1) == summary_json(s2, r2));
    CHECK(r1.front().replication == 0);
    CHECK(r1.back().replication == cfg.num_replications - 1);
}

TEST_CASE("overhead bench reports stable per-sample encrypted time") {
    ckks::CkksParams params = ckks::CkksParams::desk_scale();
    params.ring_degree = 1024;

    const auto plain_only =
        bench_overhead(params, 32, {4, 8}, 1, 2, /*encrypted=*/false);
    for (const auto& row : plain_only) {
        CHECK(row.encrypted_seconds == 0.0);
        CHECK(row.per_sample_seconds == 0.0);
        CHECK(row.plaintext_seconds >= 0.0);
    }

    const auto rows =
        bench_overhead(params, 32, {4, 8}, 1, 2, /*encrypted=*/true);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        CHECK(row.per_sample_seconds > 0.0);
        CHECK(row.encrypted_seconds > row.plaintext_seconds);
    }
    CHECK(code_of([&] { bench_overhead(params, 4096, {4}, 1, 1, false); }) ==
          ErrorCode::InvalidParams);
}
