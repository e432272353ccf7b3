// SPDX-License-Identifier: Apache-2.0

#include "tip/market/market.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "tip/ckks/evaluator.hpp"
#include "tip/ckks/keys.hpp"
#include "tip/common/error.hpp"
#include "tip/common/rng.hpp"
#include "tip/influence/gradients.hpp"
#include "tip/protocol/session.hpp"

namespace tip::market {

namespace {

using influence::Dataset;
using influence::Example;
using influence::Model;

std::string f17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Per-feature standard deviations spanning two orders of magnitude in
/// variance (1 down to 0.01): the anisotropy that makes curvature matter.
std::vector<double> feature_stddevs(int d) {
    std::vector<double> sd(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        const double expo = d > 1 ? -2.0 * j / (d - 1) : 0.0;
        sd[static_cast<std::size_t>(j)] = std::sqrt(std::pow(10.0, expo));
    }
    return sd;
}

/// Buyer-side sample: balanced Gaussian class-conditionals with means
/// +-0.4 sd_j, so the Bayes-optimal logistic coefficient is 0.8 / sd_j.
Example draw_buyer_example(Rng& rng, const std::vector<double>& sd,
                           double label_noise) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int d = static_cast<int>(sd.size());
    Example z;
    const bool one = unit(rng) < 0.5;
    z.features.resize(d);
    for (int j = 0; j < d; ++j) {
        const double mu = (one ? 1.0 : -1.0) * 0.4 * sd[j];
        z.features[j] = mu + sd[j] * gauss(rng);
    }
    const bool flip = unit(rng) < label_noise;
    z.label = (one != flip) ? 1.0 : 0.0;
    return z;
}

Dataset draw_buyer_dataset(Rng& rng, int n, const std::vector<double>& sd,
                           double label_noise) {
    Dataset out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(draw_buyer_example(rng, sd, label_noise));
    return out;
}

/// Seller-side sample: covariate shift over the buyer's concept. Features
/// come from the buyer's two-component marginal with a seller-specific
/// mean shift and a coverage knob that interpolates the anisotropic noise
/// scales toward isotropic (high-coverage sellers populate the buyer's
/// rare low-variance directions). Labels are drawn from the buyer's true
/// conditional (the mixture posterior) and flipped at the seller's noise
/// rate, so a seller with zero shift/coverage/noise is i.i.d. with the
/// buyer's clean data.
Example draw_seller_example(Rng& rng, const std::vector<double>& sd,
                            const Eigen::VectorXd& shift, double coverage,
                            double label_noise) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int d = static_cast<int>(sd.size());
    Example z;
    z.features.resize(d);
    const bool comp = unit(rng) < 0.5;  // mixture component, not the label
    double f = 0.0;
    for (int j = 0; j < d; ++j) {
        const double sdj = std::pow(sd[j], 1.0 - coverage);
        z.features[j] =
            (comp ? 1.0 : -1.0) * 0.4 * sd[j] + shift[j] + sdj * gauss(rng);
        f += (0.8 / sd[j]) * z.features[j];  // Bayes logit of the concept
    }
    const bool one = unit(rng) < 1.0 / (1.0 + std::exp(-f));
    const bool flip = unit(rng) < label_noise;
    z.label = (one != flip) ? 1.0 : 0.0;
    return z;
}

/// Ground-truth realization: re-optimize the classification head on the
/// buyer's training data augmented with the acquired bundle (Newton steps
/// on the convex head risk). The rest of the model stays frozen.
Model head_reoptimize(const Model& m, const Dataset& combined, double step,
                      int max_newton_steps) {
    Model out = m;
    if (out.layers.empty() || combined.empty()) return out;
    const Eigen::Index head = out.layers.back().W.size() +
                              out.layers.back().b.size();
    for (int it = 0; it < max_newton_steps; ++it) {
        const Eigen::VectorXd g =
            influence::risk_gradient(out, combined).tail(head);
        if (g.norm() < 1e-10) break;
        const Eigen::MatrixXd h = influence::risk_hessian(out, combined)
                                      .bottomRightCorner(head, head);
        Eigen::VectorXd theta = out.flatten();
        theta.tail(head) -= step * h.ldlt().solve(g);
        out.unflatten(theta);
    }
    return out;
}

influence::TrainConfig train_config(const MarketConfig& cfg,
                                    int replication) {
    influence::TrainConfig tc;
    tc.hidden_dims = {};
    tc.head = influence::Head::BinaryLogistic;
    tc.l2 = cfg.l2;
    tc.lr = cfg.train_lr;
    tc.epochs = cfg.train_epochs;
    tc.seed = derive_seed(cfg.seed, 0x74726e0ULL,
                          static_cast<std::uint64_t>(replication));
    return tc;
}

ckks::CkksParams session_params(std::size_t k) {
    ckks::CkksParams p = ckks::CkksParams::desk_scale();
    std::uint64_t ring = 1024;
    while (ring / 2 < k) ring *= 2;
    p.ring_degree = ring;
    return p;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
    f << text;
    if (!f) fail(ErrorCode::IoError, "short write to " + path);
}

}  // namespace

void MarketConfig::validate() const {
    if (num_replications < 1 || num_sellers < 1 || n_train < 1 ||
        n_eval < 1 || bundle_size < 1 || num_features < 1)
        fail(ErrorCode::InvalidParams, "all market counts must be >= 1");
    if (mean_shift_max < 0 || label_noise_max < 0 || label_noise_max > 1 ||
        buyer_label_noise < 0 || buyer_label_noise > 1 || coverage_max < 0 ||
        coverage_max > 1)
        fail(ErrorCode::InvalidParams, "bad heterogeneity specification");
    if (l2 < 0 || damping <= 0 || train_epochs < 1 || train_lr <= 0)
        fail(ErrorCode::InvalidParams, "bad model/valuation configuration");
    if (fine_tune_epochs < 0 || fine_tune_lr <= 0 || fine_tune_lr > 1.0)
        fail(ErrorCode::InvalidParams, "bad ground-truth configuration");
    if (k_in < 0 || k_out < 0)
        fail(ErrorCode::InvalidParams, "projection ranks must be >= 0");
}

std::string MarketConfig::to_json_text() const {
    nlohmann::json j;
    j["num_replications"] = num_replications;
    j["num_sellers"] = num_sellers;
    j["n_train"] = n_train;
    j["n_eval"] = n_eval;
    j["bundle_size"] = bundle_size;
    j["num_features"] = num_features;
    j["mean_shift_max"] = mean_shift_max;
    j["label_noise_max"] = label_noise_max;
    j["coverage_max"] = coverage_max;
    j["buyer_label_noise"] = buyer_label_noise;
    j["l2"] = l2;
    j["train_epochs"] = train_epochs;
    j["train_lr"] = train_lr;
    j["damping"] = damping;
    j["k_in"] = k_in;
    j["k_out"] = k_out;
    j["exact_preconditioner"] = exact_preconditioner;
    j["fine_tune_epochs"] = fine_tune_epochs;
    j["fine_tune_lr"] = fine_tune_lr;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

MarketConfig MarketConfig::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidParams,
             std::string("market config parse error: ") + e.what());
    }
    MarketConfig c;
    try {
        c.num_replications = j.value("num_replications", c.num_replications);
        c.num_sellers = j.value("num_sellers", c.num_sellers);
        c.n_train = j.value("n_train", c.n_train);
        c.n_eval = j.value("n_eval", c.n_eval);
        c.bundle_size = j.value("bundle_size", c.bundle_size);
        c.num_features = j.value("num_features", c.num_features);
        c.mean_shift_max = j.value("mean_shift_max", c.mean_shift_max);
        c.label_noise_max = j.value("label_noise_max", c.label_noise_max);
        c.coverage_max = j.value("coverage_max", c.coverage_max);
        c.buyer_label_noise = j.value("buyer_label_noise", c.buyer_label_noise);
        c.l2 = j.value("l2", c.l2);
        c.train_epochs = j.value("train_epochs", c.train_epochs);
        c.train_lr = j.value("train_lr", c.train_lr);
        c.damping = j.value("damping", c.damping);
        c.k_in = j.value("k_in", c.k_in);
        c.k_out = j.value("k_out", c.k_out);
        c.exact_preconditioner =
            j.value("exact_preconditioner", c.exact_preconditioner);
        c.fine_tune_epochs = j.value("fine_tune_epochs", c.fine_tune_epochs);
        c.fine_tune_lr = j.value("fine_tune_lr", c.fine_tune_lr);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidParams,
             std::string("market config field error: ") + e.what());
    }
    c.validate();
    return c;
}

MarketConfig MarketConfig::from_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    return from_json_text(text);
}

MarketInstance generate_market(const MarketConfig& cfg,
                               int replication_index) {
    cfg.validate();
    const std::vector<double> sd = feature_stddevs(cfg.num_features);
    const Eigen::VectorXd no_shift = Eigen::VectorXd::Zero(cfg.num_features);
    Rng rng = make_rng(derive_seed(cfg.seed, 0x6d6b74ULL,
                                   static_cast<std::uint64_t>(
                                       replication_index)));

    MarketInstance inst;
    inst.replication = replication_index;
    inst.buyer_train =
        draw_buyer_dataset(rng, cfg.n_train, sd, cfg.buyer_label_noise);
    inst.buyer_eval = draw_buyer_dataset(rng, cfg.n_eval, sd, 0.0);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int s = 0; s < cfg.num_sellers; ++s) {
        SellerBundle bundle;
        bundle.coverage = unit(rng) * cfg.coverage_max;
        bundle.label_noise = unit(rng) * cfg.label_noise_max;
        bundle.mean_shift = unit(rng) * cfg.mean_shift_max;
        const Eigen::VectorXd dir = Eigen::VectorXd::NullaryExpr(
            cfg.num_features, [&]() { return gauss(rng); });
        Eigen::VectorXd shift(cfg.num_features);
        for (int j = 0; j < cfg.num_features; ++j)
            shift[j] = bundle.mean_shift * dir[j] * sd[static_cast<size_t>(j)];
        bundle.data.reserve(static_cast<std::size_t>(cfg.bundle_size));
        for (int i = 0; i < cfg.bundle_size; ++i)
            bundle.data.push_back(draw_seller_example(
                rng, sd, shift, bundle.coverage, bundle.label_noise));
        inst.sellers.push_back(std::move(bundle));
    }
    return inst;
}

ReplicationResult run_replication(const MarketConfig& cfg,
                                  const MarketInstance& instance,
                                  ValuationMode mode) {
    cfg.validate();
    ReplicationResult rep;
    rep.replication = instance.replication;

    // baseline training on the buyer's own data
    const Model model =
        influence::train(instance.buyer_train,
                         train_config(cfg, instance.replication));
    const influence::KfacState kfac =
        influence::estimate_kfac(model, instance.buyer_train);
    std::vector<int> kin, kout;
    for (const auto& l : model.layers) {
        kin.push_back(cfg.k_in > 0 ? cfg.k_in
                                   : static_cast<int>(l.W.cols()) + 1);
        kout.push_back(cfg.k_out > 0 ? cfg.k_out
                                     : static_cast<int>(l.W.rows()));
    }
    const influence::ProjectionOperator proj =
        influence::build_projection(kfac, kin, kout);
    const influence::EvalVector v_eval =
        cfg.exact_preconditioner
            ? influence::exact_hessian_eval_vector(model, instance.buyer_train,
                                                   instance.buyer_eval, proj,
                                                   cfg.damping)
            : influence::preconditioned_eval_vector(
                  model, instance.buyer_eval, proj, kfac, cfg.damping);
    const influence::EvalVector g_eval_raw =
        influence::raw_eval_vector(model, instance.buyer_eval, proj);

    const double base_loss = influence::mean_loss(model, instance.buyer_eval);

    for (std::size_t s = 0; s < instance.sellers.size(); ++s) {
        const SellerBundle& bundle = instance.sellers[s];
        SellerOutcome out;
        out.mean_shift = bundle.mean_shift;
        out.label_noise = bundle.label_noise;
        out.coverage = bundle.coverage;

        // ex-ante influence scores: one protocol session per bundle in
        // encrypted mode, identical math locally in plaintext mode
        std::vector<double> s_hat;
        if (mode == ValuationMode::Encrypted) {
            protocol::SessionConfig sc;
            sc.params = session_params(proj.total_dim());
            sc.model = model;
            sc.eval_set = instance.buyer_eval;
            sc.candidates = bundle.data;
            sc.proj = proj;
            sc.kfac = kfac;
            sc.eval_vector = v_eval;
            sc.damping = cfg.damping;
            sc.seed = derive_seed(cfg.seed, 0x73657373ULL,
                                  static_cast<std::uint64_t>(
                                      instance.replication) *
                                          1000 +
                                      s);
            sc.threads = 1;
            sc.transport = protocol::TransportKind::InProc;
            s_hat = protocol::run_session(sc).encrypted_scores;
        } else {
            for (const Example& z : bundle.data)
                s_hat.push_back(influence::influence_score(
                    v_eval, influence::project_gradient(
                                influence::per_example_gradient(model, z),
                                proj)));
        }

        const std::uint64_t rand_seed =
            derive_seed(cfg.seed, 0x726e64ULL,
                        static_cast<std::uint64_t>(instance.replication) *
                                1000 +
                            s);
        for (std::size_t i = 0; i < bundle.data.size(); ++i) {
            out.utility_if += -s_hat[i];
            out.utility_cos += influence::cosine_score(
                influence::project_gradient(
                    influence::per_example_gradient(model, bundle.data[i]),
                    proj),
                g_eval_raw.values);
            out.utility_rand += influence::random_score(rand_seed, i);
        }

        // ex-post ground truth: re-optimize the head on train + bundle
        Dataset combined = instance.buyer_train;
        combined.insert(combined.end(), bundle.data.begin(),
                        bundle.data.end());
        const Model tuned = head_reoptimize(model, combined, cfg.fine_tune_lr,
                                            cfg.fine_tune_epochs);
        out.realized_benefit =
            base_loss - influence::mean_loss(tuned, instance.buyer_eval);
        rep.sellers.push_back(out);
    }

    std::vector<double> u_if, u_cos, u_rand, realized;
    for (const auto& o : rep.sellers) {
        u_if.push_back(o.utility_if);
        u_cos.push_back(o.utility_cos);
        u_rand.push_back(o.utility_rand);
        realized.push_back(o.realized_benefit);
    }
    // a constant series (e.g. zero ground-truth steps) carries no signal
    const auto safe = [](double (*f)(const std::vector<double>&,
                                     const std::vector<double>&),
                         const std::vector<double>& a,
                         const std::vector<double>& b) {
        try {
            return f(a, b);
        } catch (const TipError& e) {
            if (e.code() == ErrorCode::ConstantInput) return 0.0;
            throw;
        }
    };
    if (rep.sellers.size() >= 2) {
        rep.pearson_if = safe(pearson, u_if, realized);
        rep.pearson_cos = safe(pearson, u_cos, realized);
        rep.pearson_rand = safe(pearson, u_rand, realized);
        rep.spearman_if = safe(spearman, u_if, realized);
        rep.spearman_cos = safe(spearman, u_cos, realized);
        rep.spearman_rand = safe(spearman, u_rand, realized);
    }
    return rep;
}

std::vector<ReplicationResult> run_market(const MarketConfig& cfg,
                                          ValuationMode mode, int threads) {
    cfg.validate();
    std::vector<ReplicationResult> results(
        static_cast<std::size_t>(cfg.num_replications));
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    int n_threads = threads > 0
                        ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    n_threads = std::min(n_threads, cfg.num_replications);
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const int r = next.fetch_add(1);
                if (r >= cfg.num_replications) return;
                try {
                    results[static_cast<std::size_t>(r)] =
                        run_replication(cfg, generate_market(cfg, r), mode);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

SummaryStats summarize(const std::vector<ReplicationResult>& results,
                       std::uint64_t seed) {
    if (results.empty())
        fail(ErrorCode::InvalidParams, "no replications to summarize");
    SummaryStats s;
    s.num_replications = static_cast<int>(results.size());
    std::vector<double> deltas;
    for (const auto& r : results) {
        s.mean_abs_pearson_if += std::abs(r.pearson_if);
        s.mean_abs_pearson_cos += std::abs(r.pearson_cos);
        s.mean_abs_pearson_rand += std::abs(r.pearson_rand);
        s.mean_abs_spearman_if += std::abs(r.spearman_if);
        s.mean_abs_spearman_cos += std::abs(r.spearman_cos);
        s.mean_abs_spearman_rand += std::abs(r.spearman_rand);
        deltas.push_back(std::abs(r.pearson_if) - std::abs(r.pearson_cos));
    }
    const double n = static_cast<double>(results.size());
    s.mean_abs_pearson_if /= n;
    s.mean_abs_pearson_cos /= n;
    s.mean_abs_pearson_rand /= n;
    s.mean_abs_spearman_if /= n;
    s.mean_abs_spearman_cos /= n;
    s.mean_abs_spearman_rand /= n;
    s.if_minus_cos = paired_delta(deltas, seed);
    return s;
}

std::vector<BenchRow> bench_overhead(const ckks::CkksParams& params,
                                     std::size_t k,
                                     const std::vector<std::size_t>& batches,
                                     std::uint64_t seed, int threads,
                                     bool encrypted) {
    ckks::Context ctx(params);
    if (k > ctx.slot_count())
        fail(ErrorCode::InvalidParams, "k exceeds the slot count");
    Rng data_rng = make_rng(derive_seed(seed, 0x62656e63ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto random_vec = [&](std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = 0.1 * gauss(data_rng);
        return v;
    };
    const std::vector<double> v_eval = random_vec(k);

    ckks::KeySet keys;
    ckks::Ciphertext ct_eval;
    if (encrypted) {
        keys = ckks::keygen(ctx, derive_seed(seed, 0x6b657973ULL));
        Rng rng = make_rng(derive_seed(seed, 0x656e63ULL));
        ct_eval = ckks::encrypt(ctx, keys.public_key,
                                ckks::encode(ctx, v_eval, ctx.max_level()),
                                rng);
    }

    std::vector<BenchRow> rows;
    for (const std::size_t batch : batches) {
        std::vector<std::vector<double>> gs;
        for (std::size_t i = 0; i < batch; ++i) gs.push_back(random_vec(k));

        BenchRow row;
        row.batch = batch;
        row.k = k;

        const auto p0 = std::chrono::steady_clock::now();
        volatile double sink = 0.0;
        for (const auto& g : gs) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += v_eval[j] * g[j];
            sink = sink + dot;
        }
        const auto p1 = std::chrono::steady_clock::now();
        row.plaintext_seconds =
            std::chrono::duration<double>(p1 - p0).count();

        if (encrypted) {
            std::atomic<std::size_t> next{0};
            int n_threads = threads > 0
                                ? threads
                                : static_cast<int>(
                                      std::thread::hardware_concurrency());
            if (n_threads < 1) n_threads = 1;
            n_threads =
                std::min<int>(n_threads, static_cast<int>(batch));
            const auto e0 = std::chrono::steady_clock::now();
            std::vector<std::thread> pool;
            for (int t = 0; t < n_threads; ++t)
                pool.emplace_back([&, t] {
                    Rng rng = make_rng(derive_seed(
                        seed, 0x776b72ULL, static_cast<std::uint64_t>(t)));
                    for (;;) {
                        const std::size_t i = next.fetch_add(1);
                        if (i >= batch) return;
                        const ckks::Ciphertext ct_g = ckks::encrypt(
                            ctx, keys.public_key,
                            ckks::encode(ctx, gs[i], ctx.max_level()), rng);
                        const ckks::Ciphertext prod =
                            ckks::he_mul(ctx, ct_eval, ct_g, keys.eval_keys);
                        const ckks::Ciphertext sum = ckks::rotate_and_sum(
                            ctx, prod, prod.slot_count_used, keys.eval_keys);
                        const double got = ckks::decrypt_values(
                            ctx, keys.secret_key, sum)[0];
                        sink = sink + got;
                    }
                });
            for (auto& t : pool) t.join();
            const auto e1 = std::chrono::steady_clock::now();
            row.encrypted_seconds =
                std::chrono::duration<double>(e1 - e0).count();
            row.per_sample_seconds =
                row.encrypted_seconds / static_cast<double>(batch);
            row.overhead_seconds =
                row.encrypted_seconds - row.plaintext_seconds;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string replications_csv(const std::vector<ReplicationResult>& results) {
    std::string csv =
        "replication,seller,utility_if,utility_cos,utility_rand,"
        "realized_benefit,mean_shift,label_noise,coverage,pearson_if,"
        "pearson_cos,"
        "pearson_rand,spearman_if,spearman_cos,spearman_rand\n";
    for (const auto& r : results)
        for (std::size_t s = 0; s < r.sellers.size(); ++s) {
            const auto& o = r.sellers[s];
            csv += std::to_string(r.replication) + "," + std::to_string(s) +
                   "," + f17(o.utility_if) + "," + f17(o.utility_cos) + "," +
                   f17(o.utility_rand) + "," + f17(o.realized_benefit) + "," +
                   f17(o.mean_shift) + "," + f17(o.label_noise) + "," +
                   f17(o.coverage) + "," +
                   f17(r.pearson_if) + "," + f17(r.pearson_cos) + "," +
                   f17(r.pearson_rand) + "," + f17(r.spearman_if) + "," +
                   f17(r.spearman_cos) + "," + f17(r.spearman_rand) + "\n";
        }
    return csv;
}

std::string summary_json(const SummaryStats& stats,
                         const std::vector<ReplicationResult>& results) {
    std::vector<double> utilities;
    for (const auto& r : results)
        for (const auto& o : r.sellers) utilities.push_back(o.utility_if);
    const RankDistribution rd = rank_distribution(utilities);

    nlohmann::json j;
    j["num_replications"] = stats.num_replications;
    j["mean_abs_pearson"] = {{"if", stats.mean_abs_pearson_if},
                             {"cosine", stats.mean_abs_pearson_cos},
                             {"random", stats.mean_abs_pearson_rand}};
    j["mean_abs_spearman"] = {{"if", stats.mean_abs_spearman_if},
                              {"cosine", stats.mean_abs_spearman_cos},
                              {"random", stats.mean_abs_spearman_rand}};
    j["paired_if_minus_cos"] = {{"mean", stats.if_minus_cos.mean_delta},
                                {"ci_lo", stats.if_minus_cos.ci_lo},
                                {"ci_hi", stats.if_minus_cos.ci_hi},
                                {"p_value", stats.if_minus_cos.p_value},
                                {"degenerate", stats.if_minus_cos.degenerate}};
    j["negative_utility_fraction"] = rd.negative_fraction;
    return j.dump(2) + "\n";
}

std::string rank_distribution_csv(
    const std::vector<ReplicationResult>& results) {
    std::vector<double> utilities;
    std::vector<std::pair<int, std::size_t>> who;
    for (const auto& r : results)
        for (std::size_t s = 0; s < r.sellers.size(); ++s) {
            utilities.push_back(r.sellers[s].utility_if);
            who.emplace_back(r.replication, s);
        }
    const RankDistribution rd = rank_distribution(utilities);
    std::string csv = "rank,replication,seller,utility_if\n";
    for (const auto& row : rd.rows)
        csv += std::to_string(row.rank) + "," +
               std::to_string(who[row.index].first) + "," +
               std::to_string(who[row.index].second) + "," + f17(row.score) +
               "\n";
    return csv;
}

std::string timings_csv(const std::vector<BenchRow>& rows) {
    std::string csv =
        "batch,k,plaintext_seconds,encrypted_seconds,per_sample_seconds,"
        "overhead_seconds\n";
    for (const auto& r : rows)
        csv += std::to_string(r.batch) + "," + std::to_string(r.k) + "," +
               f17(r.plaintext_seconds) + "," + f17(r.encrypted_seconds) +
               "," + f17(r.per_sample_seconds) + "," +
               f17(r.overhead_seconds) + "\n";
    return csv;
}

void write_market_outputs(const std::string& out_dir,
                          const std::vector<ReplicationResult>& results,
                          const SummaryStats& stats,
                          const std::vector<BenchRow>& bench) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir);
    write_text(out_dir + "/replications.csv", replications_csv(results));
    write_text(out_dir + "/summary.json", summary_json(stats, results));
    write_text(out_dir + "/rank_distribution.csv",
               rank_distribution_csv(results));
    if (!bench.empty())
        write_text(out_dir + "/timings.csv", timings_csv(bench));
}

}  // namespace tip::market
