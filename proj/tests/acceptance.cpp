// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tip/ckks/evaluator.hpp"
#include "tip/ckks/keys.hpp"
#include "tip/ckks/ntt.hpp"
#include "tip/ckks/serialize.hpp"
#include "tip/common/error.hpp"
#include "tip/common/rng.hpp"
#include "tip/influence/gradients.hpp"
#include "tip/influence/influence.hpp"
#include "tip/influence/model.hpp"
#include "tip/market/market.hpp"
#include "tip/market/stats.hpp"
#include "tip/protocol/session.hpp"

using namespace tip;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

influence::Dataset blobs(std::uint64_t seed, int n, int dim, double sep) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    influence::Dataset data;
    for (int i = 0; i < n; ++i) {
        influence::Example z;
        z.label = (i % 2 == 0) ? 1.0 : 0.0;
        z.features =
            Eigen::VectorXd::NullaryExpr(dim, [&]() { return gauss(rng); });
        z.features[0] += (z.label > 0.5 ? sep : -sep);
        data.push_back(std::move(z));
    }
    return data;
}

double mae(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------
// 1. Encrypted fidelity: 2-layer MLP, k in {384, 4096}, >= 500 candidates,
//    Pearson >= 0.999 and MAE <= 1e-3, within 5 minutes.
bool criterion1(std::string& detail) {
    const int dim = 63, n_candidates = 500;
    const influence::Dataset train_set = blobs(11, 400, dim, 1.0);
    const influence::Dataset eval_set = blobs(12, 60, dim, 1.0);
    const influence::Dataset candidates = blobs(13, n_candidates, dim, 1.0);

    influence::TrainConfig tc;
    tc.hidden_dims = {64};
    tc.activation = influence::Activation::Sigmoid;
    tc.head = influence::Head::BinaryLogistic;
    tc.lr = 0.3;
    tc.epochs = 25;
    tc.l2 = 1e-2;
    tc.seed = 17;
    const influence::Model model = influence::train(train_set, tc);
    const influence::KfacState kfac = influence::estimate_kfac(model, train_set);

    struct Setting {
        std::size_t k;
        std::vector<int> k_in, k_out;
        std::uint64_t ring;
    };
    // layer shapes: 63 -> 64 -> 1, so (d_in+1, d_out) = (64, 64) and (65, 1)
    const std::vector<Setting> settings{
        {384, {40, 64}, {8, 1}, 1024},
        {4096, {64, 64}, {63, 1}, 8192},
    };

    bool ok = true;
    for (const auto& s : settings) {
        const influence::ProjectionOperator proj =
            influence::build_projection(kfac, s.k_in, s.k_out);
        if (proj.total_dim() != s.k) {
            detail += " k=" + std::to_string(s.k) + ": wrong projection dim;";
            ok = false;
            continue;
        }
        influence::EvalVector v = influence::preconditioned_eval_vector(
            model, eval_set, proj, kfac, 1e-2);
        v.values /= v.values.norm();  // unit query keeps slot noise dominant

        protocol::SessionConfig sc;
        sc.params = ckks::CkksParams::desk_scale();
        sc.params.ring_degree = s.ring;
        sc.params.decomp_log_base = 4;  // tighter key-switching noise
        sc.model = model;
        sc.eval_set = eval_set;
        sc.candidates = candidates;
        sc.proj = proj;
        sc.kfac = kfac;
        sc.eval_vector = v;
        sc.seed = 19 + s.k;
        sc.threads = 0;
        const protocol::SessionReport rep = protocol::run_session(sc);

        const double r =
            market::pearson(rep.encrypted_scores, rep.plaintext_scores);
        const double err = mae(rep.encrypted_scores, rep.plaintext_scores);
        detail += " k=" + std::to_string(s.k) + ": r=" + fmt("%.6f", r) +
                  " mae=" + fmt("%.2e", err) + ";";
        if (!(r >= 0.999 && err <= 1e-3 &&
              rep.encrypted_scores.size() >= 500))
            ok = false;
    }
    return ok;
}

// ---------------------------------------------------------------------
// 2. First-order validity: exact influence matches the epsilon-upweighting
//    re-optimization oracle within 1% for >= 95 of 100 pairs, within 1 min.
influence::Model perturbed_optimum(influence::Model m,
                                   const influence::Dataset& train,
                                   const influence::Example& z_s, double eps) {
    for (int it = 0; it < 60; ++it) {
        const Eigen::VectorXd g =
            influence::risk_gradient(m, train) +
            eps * influence::per_example_gradient(m, z_s).flat();
        if (g.norm() < 1e-12) break;
        const Eigen::MatrixXd h = influence::risk_hessian(m, train) +
                                  eps * influence::example_hessian(m, z_s);
        m.unflatten(m.flatten() - h.ldlt().solve(g).eval());
    }
    return m;
}

bool criterion2(std::string& detail) {
    const influence::Dataset train_set = blobs(23, 400, 30, 1.2);
    influence::TrainConfig tc;
    tc.l2 = 1e-2;
    tc.epochs = 150;
    tc.seed = 29;
    const influence::Model m = influence::train(train_set, tc);

    Rng rng = make_rng(31);
    const double eps = 1e-3;
    const int pairs = 100;
    int ok = 0;
    for (int t = 0; t < pairs; ++t) {
        const influence::Example& zs = train_set[rng() % train_set.size()];
        const influence::Example& ze = train_set[rng() % train_set.size()];
        const influence::Model plus = perturbed_optimum(m, train_set, zs, eps);
        const influence::Model minus =
            perturbed_optimum(m, train_set, zs, -eps);
        const double oracle = (influence::example_loss(plus, ze) -
                               influence::example_loss(minus, ze)) /
                              (2 * eps);
        const double pred = influence::exact_influence(m, train_set, zs, ze, 0.0);
        if (std::abs(pred - oracle) <= 0.01 * std::abs(oracle)) ++ok;
    }
    detail = " " + std::to_string(ok) + "/100 pairs within 1%;";
    return ok >= 95;
}

// ---------------------------------------------------------------------
// 3. Market signal quality at the default configuration.
bool criterion3(std::string& detail) {
    const market::MarketConfig cfg;  // defaults: 20 reps, 5 sellers, 200/bundle
    const auto results =
        market::run_market(cfg, market::ValuationMode::Plaintext, 0);
    const market::SummaryStats s = market::summarize(results, cfg.seed);
    detail = " |pearson| if=" + fmt("%.4f", s.mean_abs_pearson_if) +
             " cos=" + fmt("%.4f", s.mean_abs_pearson_cos) +
             " rand=" + fmt("%.4f", s.mean_abs_pearson_rand) + " delta CI [" +
             fmt("%+.4f", s.if_minus_cos.ci_lo) + "," +
             fmt("%+.4f", s.if_minus_cos.ci_hi) + "];";
    return s.mean_abs_pearson_if >= 0.90 &&
           s.mean_abs_pearson_if > s.mean_abs_pearson_cos &&
           s.mean_abs_pearson_rand <= 0.5 &&
           (s.if_minus_cos.ci_lo > 0.0 || s.if_minus_cos.ci_hi < 0.0) &&
           s.if_minus_cos.ci_lo > 0.0;
}

// ---------------------------------------------------------------------
// 4. CKKS property suite: homomorphic operations within their tracked noise
//    bounds over >= 200 seeds, byte-exact serialization, schoolbook oracle.
bool criterion4(std::string& detail) {
    ckks::CkksParams p = ckks::CkksParams::desk_scale();
    p.ring_degree = 1024;
    const ckks::Context ctx(p);
    const ckks::KeySet ks = ckks::keygen(ctx, 12345);

    int failures = 0;
    double worst_ip = 0.0;
    for (int seed = 0; seed < 200; ++seed) {
        Rng rng = make_rng(derive_seed(1000, seed));
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        const std::size_t k = 64;
        std::vector<double> a(k), b(k);
        for (auto& x : a) x = dist(rng);
        for (auto& x : b) x = dist(rng);
        const ckks::Ciphertext ca = ckks::encrypt(
            ctx, ks.public_key, ckks::encode(ctx, a, ctx.max_level()), rng);
        const ckks::Ciphertext cb = ckks::encrypt(
            ctx, ks.public_key, ckks::encode(ctx, b, ctx.max_level()), rng);

        // additive + multiplicative homomorphism within the tracked bound
        const auto sum =
            ckks::decrypt_values(ctx, ks.secret_key, ckks::he_add(ctx, ca, cb));
        const ckks::Ciphertext cp = ckks::he_mul(ctx, ca, cb, ks.eval_keys);
        const auto prod = ckks::decrypt_values(ctx, ks.secret_key, cp);
        for (std::size_t i = 0; i < k; ++i) {
            if (std::abs(sum[i] - (a[i] + b[i])) >= 1e-4) ++failures;
            if (std::abs(prod[i] - a[i] * b[i]) >= cp.noise_bound) ++failures;
        }

        // rotation
        const std::size_t step = 1 + seed % (ctx.slot_count() - 1);
        const auto rot = ckks::decrypt_values(
            ctx, ks.secret_key, ckks::rotate(ctx, ca, step, ks.eval_keys));
        std::vector<double> padded(ctx.slot_count(), 0.0);
        std::copy(a.begin(), a.end(), padded.begin());
        std::rotate(padded.begin(), padded.begin() + step, padded.end());
        for (std::size_t i = 0; i < padded.size(); ++i)
            if (std::abs(rot[i] - padded[i]) >= 1e-4) ++failures;

        // inner product against the plaintext value, within the bound
        const ckks::Ciphertext ip = ckks::rotate_and_sum(
            ctx, cp, cp.slot_count_used, ks.eval_keys);
        const auto got = ckks::decrypt_values(ctx, ks.secret_key, ip);
        const double want =
            std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
        worst_ip = std::max(worst_ip, std::abs(got[0] - want));
        if (std::abs(got[0] - want) >= ip.noise_bound) ++failures;

        // byte-exact serialization
        const auto bytes = ckks::serialize_ciphertext(ctx, cp);
        if (ckks::serialize_ciphertext(
                ctx, ckks::deserialize_ciphertext(bytes, ctx)) != bytes)
            ++failures;
    }

    // schoolbook-vs-NTT multiplication oracle on 50 random pairs
    int ntt_mismatch = 0;
    for (int t = 0; t < 50; ++t) {
        const std::uint64_t q = p.modulus_chain[t % p.modulus_chain.size()];
        ckks::NttTable table(q, p.ring_degree);
        Rng rng = make_rng(derive_seed(2000, t));
        std::uniform_int_distribution<std::uint64_t> dist(0, q - 1);
        std::vector<std::uint64_t> a(p.ring_degree), b(p.ring_degree);
        for (auto& x : a) x = dist(rng);
        for (auto& x : b) x = dist(rng);
        if (table.multiply(a, b) !=
            ckks::NttTable::multiply_schoolbook(a, b, q))
            ++ntt_mismatch;
    }

    detail = " 200 seeds, worst inner-product err=" + fmt("%.2e", worst_ip) +
             ", " + std::to_string(failures) + " bound violations, " +
             std::to_string(ntt_mismatch) + "/50 NTT mismatches;";
    return failures == 0 && ntt_mismatch == 0;
}

// ---------------------------------------------------------------------
// 5. Additivity of group valuation; sign agreement with retraining.
bool criterion5(std::string& detail) {
    // exact additivity over disjoint unions; dyadic-rational scores so every
    // partial sum is representable and exact equality is well-defined
    Rng srng = make_rng(41);
    std::vector<double> scores(40);
    for (auto& s : scores)
        s = static_cast<double>(static_cast<std::int64_t>(srng() % 2097152) -
                                1048576) /
            1024.0;
    for (int t = 0; t < 20; ++t) {
        std::vector<std::size_t> a, b, both;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const int r = static_cast<int>(srng() % 3);
            if (r == 0) a.push_back(i);
            if (r == 1) b.push_back(i);
        }
        both = a;
        both.insert(both.end(), b.begin(), b.end());
        if (influence::group_value(scores, a) +
                influence::group_value(scores, b) !=
            influence::group_value(scores, both)) {
            detail = " additivity violated;";
            return false;
        }
    }

    // sign agreement with actual re-optimization on a convex model
    const influence::Dataset train_set = blobs(43, 250, 4, 1.2);
    const influence::Dataset eval_set = blobs(47, 40, 4, 1.2);
    const influence::Dataset pool = blobs(53, 25, 4, 1.2);
    influence::TrainConfig tc;
    tc.l2 = 1e-2;
    tc.epochs = 150;
    tc.seed = 59;
    const influence::Model m = influence::train(train_set, tc);
    const double n = static_cast<double>(train_set.size());

    std::vector<double> utils;
    for (const auto& zs : pool) {
        double mean_i = 0.0;
        for (const auto& ze : eval_set)
            mean_i += influence::exact_influence(m, train_set, zs, ze, 0.0);
        utils.push_back(-mean_i / static_cast<double>(eval_set.size()));
    }

    Rng rng = make_rng(61);
    int sign_ok = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
        const std::size_t size = 1 + rng() % 10;
        std::set<std::size_t> pick;
        while (pick.size() < size) pick.insert(rng() % pool.size());
        const std::vector<std::size_t> subset(pick.begin(), pick.end());

        influence::Model shifted = m;
        for (int it = 0; it < 40; ++it) {
            Eigen::VectorXd g = influence::risk_gradient(shifted, train_set) * n;
            Eigen::MatrixXd h = influence::risk_hessian(shifted, train_set) * n;
            for (std::size_t i : subset) {
                g += influence::per_example_gradient(shifted, pool[i]).flat();
                h += influence::example_hessian(shifted, pool[i]);
            }
            if (g.norm() < 1e-11) break;
            shifted.unflatten(shifted.flatten() - h.ldlt().solve(g).eval());
        }
        const double realized = influence::mean_loss(m, eval_set) -
                                influence::mean_loss(shifted, eval_set);
        if (realized * influence::group_value(utils, subset) > 0) ++sign_ok;
    }
    detail = " additive; sign agreement " + std::to_string(sign_ok) + "/50;";
    return sign_ok >= 45;
}

// ---------------------------------------------------------------------
// 6. Overhead linearity: per-sample encrypted time stable across batches.
bool criterion6(std::string& detail) {
    ckks::CkksParams p = ckks::CkksParams::desk_scale();
    p.ring_degree = 1024;
    const auto rows =
        market::bench_overhead(p, 384, {10, 100, 1000}, 67, 1, true);
    double lo = rows[0].per_sample_seconds, hi = lo;
    for (const auto& r : rows) {
        lo = std::min(lo, r.per_sample_seconds);
        hi = std::max(hi, r.per_sample_seconds);
        detail += " batch " + std::to_string(r.batch) + ": " +
                  fmt("%.4f", r.per_sample_seconds) + " s/sample;";
    }
    const double spread = (hi - lo) / lo;
    detail += " spread " + fmt("%.1f", 100.0 * spread) + "%;";
    return spread <= 0.20;
}

// ---------------------------------------------------------------------
// 7. Protocol safety: role isolation, transport equivalence, tamper abort.
template <typename T>
concept HoldsSecretKey = requires(T t) {
    { t.keys.secret_key };
};
static_assert(HoldsSecretKey<protocol::BuyerState>);
static_assert(!HoldsSecretKey<protocol::SellerState>);
static_assert(!HoldsSecretKey<protocol::BrokerState>);

bool criterion7(std::string& detail) {
    const influence::Dataset train_set = blobs(71, 50, 6, 1.5);
    const influence::Dataset eval_set = blobs(73, 16, 6, 1.5);
    const influence::Dataset candidates = blobs(79, 8, 6, 1.5);
    influence::TrainConfig tc;
    tc.l2 = 1e-2;
    tc.epochs = 100;
    tc.seed = 83;
    const influence::Model model = influence::train(train_set, tc);
    const influence::KfacState kfac = influence::estimate_kfac(model, train_set);
    std::vector<int> kin, kout;
    for (const auto& l : model.layers) {
        kin.push_back(static_cast<int>(l.W.cols()) + 1);
        kout.push_back(static_cast<int>(l.W.rows()));
    }
    const influence::ProjectionOperator proj =
        influence::build_projection(kfac, kin, kout);

    protocol::SessionConfig sc;
    sc.params = ckks::CkksParams::desk_scale();
    sc.params.ring_degree = 1024;
    sc.model = model;
    sc.eval_set = eval_set;
    sc.candidates = candidates;
    sc.proj = proj;
    sc.kfac = kfac;
    sc.seed = 89;
    sc.threads = 1;

    // transport equivalence: bitwise-identical decrypted scores
    sc.transport = protocol::TransportKind::InProc;
    const auto inproc = protocol::run_session(sc).encrypted_scores;
    sc.transport = protocol::TransportKind::Tcp;
    const auto tcp = protocol::run_session(sc).encrypted_scores;
    const bool equiv = inproc == tcp;

    // tamper abort: a truncated candidate frame aborts the whole session
    auto [buyer, eval_frame] = protocol::buyer_setup(
        model, eval_set, proj, kfac, sc.params, sc.seed, sc.damping);
    const protocol::SellerState seller = protocol::make_seller(
        buyer.ctx, buyer.keys.public_key, model, proj, buyer.header);
    std::vector<protocol::SessionMessage> frames =
        protocol::seller_prepare(seller, candidates, sc.seed);
    frames[2].payload.resize(frames[2].payload.size() / 2);

    auto [buyer_end, broker_buyer_end] = protocol::InProcChannel::make_pair();
    auto [seller_end, broker_seller_end] = protocol::InProcChannel::make_pair();
    bool aborted = false;
    std::thread broker([&] {
        try {
            protocol::run_broker_role(*broker_buyer_end, *broker_seller_end,
                                      buyer.ctx, 1);
        } catch (const TipError& e) {
            aborted = e.code() == ErrorCode::ProtocolViolation;
        }
    });
    buyer_end->send(eval_frame);
    for (const auto& f : frames) seller_end->send(f);
    protocol::SessionMessage done;
    done.session_id = buyer.header.session_id;
    done.msg_type = protocol::MsgType::Ack;
    done.sequence = static_cast<std::uint32_t>(frames.size());
    seller_end->send(done);
    const bool buyer_told =
        buyer_end->recv().msg_type == protocol::MsgType::Error;
    const bool seller_told =
        seller_end->recv().msg_type == protocol::MsgType::Error;
    broker.join();

    detail = std::string(" role isolation by construction;") +
             (equiv ? " transports bitwise-equal;" : " transports differ;") +
             (aborted && buyer_told && seller_told ? " tamper aborted both;"
                                                   : " tamper NOT aborted;");
    return equiv && aborted && buyer_told && seller_told;
}

struct Criterion {
    const char* name;
    bool (*fn)(std::string&);
    double limit_s;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"encrypted fidelity", criterion1, 300.0},
        {"first-order validity", criterion2, 60.0},
        {"market signal quality", criterion3, 600.0},
        {"ckks property suite", criterion4, 180.0},
        {"group additivity and retraining sign", criterion5, 120.0},
        {"overhead linearity", criterion6, 600.0},
        {"protocol safety", criterion7, 600.0},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::string detail;
        const double t0 = now_s();
        bool ok = false;
        try {
            ok = criteria[i].fn(detail);
        } catch (const std::exception& e) {
            detail = std::string(" exception: ") + e.what() + ";";
        }
        const double dt = now_s() - t0;
        if (dt > criteria[i].limit_s) {
            ok = false;
            detail += " over time limit;";
        }
        std::printf("criterion %zu (%s): %s —%s %.1f s\n", i + 1,
                    criteria[i].name, ok ? "PASS" : "FAIL", detail.c_str(),
                    dt);
        std::fflush(stdout);
        if (!ok) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
