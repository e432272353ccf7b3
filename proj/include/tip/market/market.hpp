// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_MARKET_MARKET_HPP
#define TIP_MARKET_MARKET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tip/ckks/params.hpp"
#include "tip/influence/influence.hpp"
#include "tip/influence/model.hpp"
#include "tip/market/stats.hpp"

namespace tip::market {

/// Full description of a synthetic data-market experiment. The feature
/// generator is anisotropic on purpose: per-feature variances span two
/// orders of magnitude so curvature information matters for valuation.
struct MarketConfig {
    int num_replications = 20;
    int num_sellers = 5;
    int n_train = 2000;      // buyer training set
    int n_eval = 100;        // buyer evaluation set
    int bundle_size = 200;   // candidate points per seller
    int num_features = 30;

    double mean_shift_max = 0.5;   // per-seller distribution shift cap
    double label_noise_max = 0.4;  // per-seller label flip rate cap
    double coverage_max = 1.0;     // cap on rare-direction coverage knob
    double buyer_label_noise = 0.15;  // noise in the buyer's own training set

    double l2 = 1e-2;
    int train_epochs = 150;
    double train_lr = 0.5;

    double damping = 1e-2;  // lambda in the valuation preconditioner
    int k_in = 0;           // 0 -> full rank
    int k_out = 0;
    // exact dense-Hessian preconditioner for the buyer's query vector
    // (feasible at market scale); false -> K-FAC approximation
    bool exact_preconditioner = true;

    // ground truth: damped Newton re-optimization of the head on
    // buyer_train + bundle; epochs = max Newton steps, lr = step scale
    int fine_tune_epochs = 25;
    double fine_tune_lr = 1.0;

    std::uint64_t seed = 42;

    void validate() const;
    std::string to_json_text() const;
    static MarketConfig from_json_text(const std::string& text);
    static MarketConfig from_json_file(const std::string& path);
};

struct SellerBundle {
    influence::Dataset data;
    double mean_shift = 0.0;
    double label_noise = 0.0;
    double coverage = 0.0;  // 1 -> isotropic features (covers rare axes)
};

struct MarketInstance {
    influence::Dataset buyer_train;
    influence::Dataset buyer_eval;
    std::vector<SellerBundle> sellers;
    int replication = 0;
};

/// Deterministic in (config.seed, replication_index).
MarketInstance generate_market(const MarketConfig& cfg, int replication_index);

enum class ValuationMode { Plaintext, Encrypted };

struct SellerOutcome {
    double utility_if = 0.0;    // ex-ante influence utility (sum of -s_hat)
    double utility_cos = 0.0;   // cosine baseline
    double utility_rand = 0.0;  // random baseline
    double realized_benefit = 0.0;  // ex-post eval-loss reduction
    double mean_shift = 0.0;
    double label_noise = 0.0;
    double coverage = 0.0;
};

struct ReplicationResult {
    int replication = 0;
    std::vector<SellerOutcome> sellers;
    double pearson_if = 0.0, pearson_cos = 0.0, pearson_rand = 0.0;
    double spearman_if = 0.0, spearman_cos = 0.0, spearman_rand = 0.0;
};

/// Baseline training, ex-ante valuation (encrypted mode runs a full
/// protocol session per seller bundle), then the ex-post ground-truth pass:
/// clone the trained model, fine-tune the head on the bundle, and measure
/// the evaluation-loss reduction.
ReplicationResult run_replication(const MarketConfig& cfg,
                                  const MarketInstance& instance,
                                  ValuationMode mode);

/// Runs all replications (independent, parallelized up to `threads`) and
/// returns them ordered by replication index.
std::vector<ReplicationResult> run_market(const MarketConfig& cfg,
                                          ValuationMode mode, int threads = 0);

struct SummaryStats {
    double mean_abs_pearson_if = 0.0, mean_abs_pearson_cos = 0.0,
           mean_abs_pearson_rand = 0.0;
    double mean_abs_spearman_if = 0.0, mean_abs_spearman_cos = 0.0,
           mean_abs_spearman_rand = 0.0;
    PairedDelta if_minus_cos;  // per-replication |Pearson| differences
    int num_replications = 0;
};

SummaryStats summarize(const std::vector<ReplicationResult>& results,
                       std::uint64_t seed);

struct BenchRow {
    std::size_t batch = 0;
    std::size_t k = 0;
    double plaintext_seconds = 0.0;
    double encrypted_seconds = 0.0;   // 0 in plaintext-only mode
    double per_sample_seconds = 0.0;  // encrypted path per candidate
    double overhead_seconds = 0.0;    // encrypted - plaintext
};

/// Times the scoring path across batch sizes at a fixed projected
/// dimension k, using a synthetic convex model whose parameter count is k.
std::vector<BenchRow> bench_overhead(const ckks::CkksParams& params,
                                     std::size_t k,
                                     const std::vector<std::size_t>& batches,
                                     std::uint64_t seed, int threads,
                                     bool encrypted);

// plot/report-ready artifacts; every float printed with 17 significant digits
std::string replications_csv(const std::vector<ReplicationResult>& results);
std::string summary_json(const SummaryStats& stats,
                         const std::vector<ReplicationResult>& results);
std::string rank_distribution_csv(const std::vector<ReplicationResult>& results);
std::string timings_csv(const std::vector<BenchRow>& rows);

/// Writes replications.csv, summary.json, rank_distribution.csv and, when
/// `bench` is nonempty, timings.csv into `out_dir`.
void write_market_outputs(const std::string& out_dir,
                          const std::vector<ReplicationResult>& results,
                          const SummaryStats& stats,
                          const std::vector<BenchRow>& bench);

}  // namespace tip::market

#endif  // TIP_MARKET_MARKET_HPP
