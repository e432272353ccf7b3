// SPDX-License-Identifier: Apache-2.0
//
// Single command-line entry point for the Trustworthy Influence Protocol:
//   tip keygen    write CKKS key files
//   tip score     run one buyer/seller/broker scoring session
//   tip simulate  run the synthetic data-market experiment
//   tip bench     measure encrypted-scoring overhead
//
// Exit codes: 0 success, 2 usage/config error, 1 runtime failure.
// stdout carries only tabular results; diagnostics go to stderr.
// The TIP_LOG environment variable sets verbosity (0 silent, 1 default,
// 2 prints the per-frame session log).

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tip/ckks/context.hpp"
#include "tip/ckks/keys.hpp"
#include "tip/ckks/params.hpp"
#include "tip/ckks/serialize.hpp"
#include "tip/common/error.hpp"
#include "tip/common/rng.hpp"
#include "tip/influence/influence.hpp"
#include "tip/influence/io.hpp"
#include "tip/influence/model.hpp"
#include "tip/market/market.hpp"
#include "tip/market/stats.hpp"
#include "tip/protocol/session.hpp"
#include "tip/protocol/transport.hpp"

namespace {

using tip::ErrorCode;
using tip::TipError;

/// Configuration-phase failure: maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int log_level() {
    const char* v = std::getenv("TIP_LOG");
    if (!v || !*v) return 1;
    return std::atoi(v);
}

void diag(int level, const std::string& msg) {
    if (log_level() >= level) std::cerr << msg << "\n";
}

/// Runs the configuration phase; any library error here is a config error.
template <class F>
auto load_or_usage(F&& f) {
    try {
        return f();
    } catch (const TipError& e) {
        throw UsageError(e.what());
    }
}

std::string f17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex32(const std::array<std::uint8_t, 32>& h) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (std::uint8_t b : h) {
        s += digits[b >> 4];
        s += digits[b & 0xf];
    }
    return s;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& b) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) tip::fail(ErrorCode::IoError, "cannot open " + path);
    f.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
    if (!f) tip::fail(ErrorCode::IoError, "short write to " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) tip::fail(ErrorCode::IoError, "cannot open " + path);
    f << text;
    if (!f) tip::fail(ErrorCode::IoError, "short write to " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) tip::fail(ErrorCode::IoError, "cannot open " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

tip::ckks::CkksParams load_params(const std::string& path, std::size_t k) {
    if (!path.empty()) return tip::ckks::CkksParams::from_json_file(path);
    tip::ckks::CkksParams p = tip::ckks::CkksParams::desk_scale();
    std::uint64_t ring = 1024;
    while (ring / 2 < k) ring *= 2;
    p.ring_degree = ring;
    return p;
}

std::pair<std::string, int> split_host_port(const std::string& s) {
    const std::size_t colon = s.rfind(':');
    if (colon == std::string::npos || colon + 1 == s.size())
        throw UsageError("--connect expects host:port, got '" + s + "'");
    const int port = std::atoi(s.c_str() + colon + 1);
    if (port <= 0 || port > 65535)
        throw UsageError("bad port in '" + s + "'");
    return {s.substr(0, colon), port};
}

// ---------------------------------------------------------------- keygen

struct KeygenOpts {
    std::string params_path;
    std::string out_dir = "keys";
    std::uint64_t seed = 1;
};

int cmd_keygen(const KeygenOpts& o) {
    const tip::ckks::CkksParams params =
        load_or_usage([&] { return load_params(o.params_path, 0); });
    const tip::ckks::Context ctx(params);
    // same derivation the buyer role uses, so a seller process can pair a
    // keygen output directory with a shared session seed
    const tip::ckks::KeySet keys =
        tip::ckks::keygen(ctx, tip::derive_seed(o.seed, 0x6b657973ULL));

    std::error_code ec;
    std::filesystem::create_directories(o.out_dir, ec);
    if (ec) throw UsageError("cannot create " + o.out_dir);
    write_file(o.out_dir + "/public.tipk",
               tip::ckks::serialize_public_key(ctx, keys.public_key));
    write_file(o.out_dir + "/secret.tipk",
               tip::ckks::serialize_secret_key(ctx, keys.secret_key));
    write_file(o.out_dir + "/eval.tipk",
               tip::ckks::serialize_eval_keys(ctx, keys.eval_keys));
    diag(1, "wrote public.tipk, secret.tipk, eval.tipk to " + o.out_dir);
    std::cout << "params_hash " << hex32(params.hash()) << "\n";
    return 0;
}

// ----------------------------------------------------------------- score

struct ScoreOpts {
    std::string train_path, eval_path, candidates_path, model_path;
    std::string params_path, keys_dir, out_path;
    std::string mode = "encrypted";
    std::string transport = "inproc";
    std::string role;           // empty -> all roles in this process
    std::string connect;        // host:port for buyer/seller roles
    int listen_port = 0;        // broker role
    bool verify = false;
    bool exact = false;         // exact dense-Hessian preconditioner
    std::uint64_t seed = 1;
    int threads = 0;
    double damping = 1e-3;
    double l2 = 1e-2;
    double lr = 0.5;
    int epochs = 150;
};

struct ScoreSetup {
    tip::influence::Dataset train, eval_set, candidates;
    tip::influence::Model model;
    tip::influence::KfacState kfac;
    tip::influence::ProjectionOperator proj;
    tip::ckks::CkksParams params;
};

ScoreSetup score_setup(const ScoreOpts& o, bool need_eval,
                       bool need_candidates) {
    return load_or_usage([&] {
        ScoreSetup s;
        if (o.train_path.empty())
            tip::fail(ErrorCode::InvalidParams, "--train is required");
        s.train = tip::influence::load_csv(o.train_path);
        if (need_eval) {
            if (o.eval_path.empty())
                tip::fail(ErrorCode::InvalidParams, "--eval is required");
            s.eval_set = tip::influence::load_csv(o.eval_path);
        }
        if (need_candidates) {
            if (o.candidates_path.empty())
                tip::fail(ErrorCode::InvalidParams,
                          "--candidates is required");
            s.candidates = tip::influence::load_csv(o.candidates_path);
            if (s.candidates.empty())
                tip::fail(ErrorCode::InvalidParams, "no candidates");
        }
        if (!o.model_path.empty()) {
            s.model = tip::influence::load_model(o.model_path);
        } else {
            tip::influence::TrainConfig tc;
            tc.l2 = o.l2;
            tc.lr = o.lr;
            tc.epochs = o.epochs;
            tc.seed = tip::derive_seed(o.seed, 0x74726e0ULL);
            s.model = tip::influence::train(s.train, tc);
        }
        s.kfac = tip::influence::estimate_kfac(s.model, s.train);
        std::vector<int> kin, kout;
        for (const auto& l : s.model.layers) {
            kin.push_back(static_cast<int>(l.W.cols()) + 1);
            kout.push_back(static_cast<int>(l.W.rows()));
        }
        s.proj = tip::influence::build_projection(s.kfac, kin, kout);
        s.params = load_params(o.params_path, s.proj.total_dim());
        return s;
    });
}

tip::influence::EvalVector buyer_query_vector(const ScoreOpts& o,
                                              const ScoreSetup& s) {
    return o.exact ? tip::influence::exact_hessian_eval_vector(
                         s.model, s.train, s.eval_set, s.proj, o.damping)
                   : tip::influence::preconditioned_eval_vector(
                         s.model, s.eval_set, s.proj, s.kfac, o.damping);
}

void emit_scores(const ScoreOpts& o, const std::vector<double>& s_hat,
                 const std::vector<double>* reference) {
    std::string csv = reference ? "index,s_hat,s_plain\n" : "index,s_hat\n";
    std::printf(reference ? "%8s  %24s  %24s\n" : "%8s  %24s\n", "index",
                "s_hat", "s_plain");
    for (std::size_t i = 0; i < s_hat.size(); ++i) {
        csv += std::to_string(i) + "," + f17(s_hat[i]);
        if (reference) {
            csv += "," + f17((*reference)[i]);
            std::printf("%8zu  %24.16g  %24.16g\n", i, s_hat[i],
                        (*reference)[i]);
        } else {
            std::printf("%8zu  %24.16g\n", i, s_hat[i]);
        }
        csv += "\n";
    }
    if (reference) {
        double max_err = 0.0;
        for (std::size_t i = 0; i < s_hat.size(); ++i)
            max_err = std::max(max_err, std::abs(s_hat[i] - (*reference)[i]));
        double r = 1.0;
        if (s_hat.size() >= 2) r = tip::market::pearson(s_hat, *reference);
        std::printf("pearson %.6f\n", r);
        std::printf("max_abs_error %.3g\n", max_err);
    }
    if (!o.out_path.empty()) {
        write_text(o.out_path, csv);
        diag(1, "wrote " + o.out_path);
    }
}

int score_single_process(const ScoreOpts& o) {
    const ScoreSetup s = score_setup(o, true, true);
    const tip::influence::EvalVector v_eval = buyer_query_vector(o, s);

    if (o.mode == "plaintext") {
        std::vector<double> scores;
        for (const auto& z : s.candidates)
            scores.push_back(tip::influence::influence_score(
                v_eval, tip::influence::project_gradient(
                            tip::influence::per_example_gradient(s.model, z),
                            s.proj)));
        emit_scores(o, scores, o.verify ? &scores : nullptr);
        return 0;
    }

    tip::protocol::SessionConfig sc;
    sc.params = s.params;
    sc.model = s.model;
    sc.eval_set = s.eval_set;
    sc.candidates = s.candidates;
    sc.proj = s.proj;
    sc.kfac = s.kfac;
    sc.eval_vector = v_eval;
    sc.damping = o.damping;
    sc.seed = o.seed;
    sc.threads = o.threads;
    sc.transport = o.transport == "tcp" ? tip::protocol::TransportKind::Tcp
                                        : tip::protocol::TransportKind::InProc;
    const tip::protocol::SessionReport report = tip::protocol::run_session(sc);
    for (const auto& line : report.log) diag(2, line);
    diag(1, "encrypted path " + f17(report.encrypted_seconds) +
                " s, plaintext path " + f17(report.plaintext_seconds) + " s");
    emit_scores(o, report.encrypted_scores,
                o.verify ? &report.plaintext_scores : nullptr);
    return 0;
}

int score_role(const ScoreOpts& o) {
    if (o.params_path.empty())
        throw UsageError("--role requires an explicit --params file");
    if (o.role == "broker") {
        if (o.listen_port <= 0)
            throw UsageError("--role broker requires --listen <port>");
        const tip::ckks::CkksParams params =
            load_or_usage([&] { return load_params(o.params_path, 0); });
        auto ctx = std::make_shared<const tip::ckks::Context>(params);
        const int lfd_b = tip::protocol::tcp_listen("0.0.0.0", o.listen_port);
        const int lfd_s =
            tip::protocol::tcp_listen("0.0.0.0", o.listen_port + 1);
        diag(1, "broker listening: buyer on port " +
                    std::to_string(o.listen_port) + ", seller on port " +
                    std::to_string(o.listen_port + 1));
        tip::protocol::TcpChannel cb(tip::protocol::tcp_accept(lfd_b));
        tip::protocol::TcpChannel cs(tip::protocol::tcp_accept(lfd_s));
        std::vector<std::string> log;
        tip::protocol::run_broker_role(cb, cs, ctx, o.threads, &log);
        for (const auto& line : log) diag(2, line);
        ::close(lfd_b);
        ::close(lfd_s);
        return 0;
    }

    if (o.connect.empty())
        throw UsageError("--role " + o.role + " requires --connect host:port");
    const auto [host, port] = split_host_port(o.connect);

    if (o.role == "buyer") {
        const ScoreSetup s = score_setup(o, true, false);
        const auto [buyer, eval_frame] = tip::protocol::buyer_setup(
            buyer_query_vector(o, s), s.proj, s.params, o.seed);
        tip::protocol::TcpChannel c(tip::protocol::tcp_connect(host, port));
        std::vector<std::string> log;
        const tip::protocol::FinalScores scores =
            tip::protocol::run_buyer_role(c, buyer, eval_frame, &log);
        for (const auto& line : log) diag(2, line);
        emit_scores(o, scores.s_hat, nullptr);
        return 0;
    }

    if (o.role == "seller") {
        const ScoreSetup s = score_setup(o, false, true);
        auto ctx = std::make_shared<const tip::ckks::Context>(s.params);
        // the buyer's public key: from a shared keygen directory when given,
        // otherwise re-derived from the shared session seed
        tip::ckks::PublicKey pk;
        if (!o.keys_dir.empty()) {
            pk = load_or_usage([&] {
                return tip::ckks::deserialize_public_key(
                    read_file(o.keys_dir + "/public.tipk"), *ctx);
            });
        } else {
            pk = tip::ckks::keygen(*ctx,
                                   tip::derive_seed(o.seed, 0x6b657973ULL))
                     .public_key;
        }
        tip::protocol::SessionHeader header;
        header.session_id = tip::protocol::make_session_id(o.seed);
        header.params_hash = ctx->params_hash();
        header.k = static_cast<std::uint32_t>(s.proj.total_dim());
        header.projection_checksum = tip::protocol::projection_checksum(s.proj);
        const tip::protocol::SellerState seller =
            tip::protocol::make_seller(ctx, pk, s.model, s.proj, header);
        tip::protocol::TcpChannel c(tip::protocol::tcp_connect(host, port));
        std::vector<std::string> log;
        tip::protocol::run_seller_role(c, seller, s.candidates, o.seed, &log);
        for (const auto& line : log) diag(2, line);
        return 0;
    }
    throw UsageError("unknown --role '" + o.role + "'");
}

int cmd_score(const ScoreOpts& o) {
    return o.role.empty() ? score_single_process(o) : score_role(o);
}

// -------------------------------------------------------------- simulate

struct SimulateOpts {
    std::string config_path;
    std::string out_dir = "market_out";
    std::string mode = "plaintext";
    std::optional<std::uint64_t> seed;
    int threads = 0;
};

int cmd_simulate(const SimulateOpts& o) {
    tip::market::MarketConfig cfg = load_or_usage([&] {
        return o.config_path.empty()
                   ? tip::market::MarketConfig{}
                   : tip::market::MarketConfig::from_json_file(o.config_path);
    });
    if (o.seed) cfg.seed = *o.seed;
    const tip::market::ValuationMode mode =
        o.mode == "encrypted" ? tip::market::ValuationMode::Encrypted
                              : tip::market::ValuationMode::Plaintext;
    if (cfg.num_replications == 1)
        diag(1, "warning: a single replication yields a degenerate "
                "confidence interval");

    const std::vector<tip::market::ReplicationResult> results =
        tip::market::run_market(cfg, mode, o.threads);
    const tip::market::SummaryStats stats =
        tip::market::summarize(results, cfg.seed);
    tip::market::write_market_outputs(o.out_dir, results, stats, {});
    diag(1, "wrote replications.csv, summary.json, rank_distribution.csv to " +
                o.out_dir);

    std::printf("%-10s  %18s  %18s\n", "Signal", "Mean |Pearson|",
                "Mean |Spearman|");
    std::printf("%-10s  %18.4f  %18.4f\n", "IF", stats.mean_abs_pearson_if,
                stats.mean_abs_spearman_if);
    std::printf("%-10s  %18.4f  %18.4f\n", "Cosine", stats.mean_abs_pearson_cos,
                stats.mean_abs_spearman_cos);
    std::printf("%-10s  %18.4f  %18.4f\n", "Random",
                stats.mean_abs_pearson_rand, stats.mean_abs_spearman_rand);
    std::printf("IF-Cosine  %+.4f  95%% CI [%+.4f, %+.4f]  p=%.4f%s\n",
                stats.if_minus_cos.mean_delta, stats.if_minus_cos.ci_lo,
                stats.if_minus_cos.ci_hi, stats.if_minus_cos.p_value,
                stats.if_minus_cos.degenerate ? "  (degenerate)" : "");
    return 0;
}

// ----------------------------------------------------------------- bench

struct BenchOpts {
    std::string params_path, out_path;
    std::string mode = "encrypted";
    std::size_t k = 384;
    std::vector<std::size_t> batches{10, 100, 1000};
    std::uint64_t seed = 1;
    int threads = 0;
};

int cmd_bench(const BenchOpts& o) {
    const tip::ckks::CkksParams params =
        load_or_usage([&] { return load_params(o.params_path, o.k); });
    const std::vector<tip::market::BenchRow> rows = tip::market::bench_overhead(
        params, o.k, o.batches, o.seed, o.threads, o.mode == "encrypted");

    std::printf("%8s  %6s  %16s  %16s  %16s\n", "batch", "k", "plaintext_s",
                "encrypted_s", "per_sample_s");
    for (const auto& r : rows)
        std::printf("%8zu  %6zu  %16.6f  %16.6f  %16.6f\n", r.batch, r.k,
                    r.plaintext_seconds, r.encrypted_seconds,
                    r.per_sample_seconds);
    if (!o.out_path.empty()) {
        write_text(o.out_path, tip::market::timings_csv(rows));
        diag(1, "wrote " + o.out_path);
    }
    return 0;
}

template <class F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trustworthy Influence Protocol toolkit"};
    app.require_subcommand(1);

    KeygenOpts kg;
    CLI::App* key = app.add_subcommand("keygen", "write CKKS key files");
    key->add_option("--params", kg.params_path, "CKKS params JSON file");
    key->add_option("--out", kg.out_dir, "output directory");
    key->add_option("--seed", kg.seed, "key generation seed");

    ScoreOpts so;
    CLI::App* score =
        app.add_subcommand("score", "run one encrypted scoring session");
    score->add_option("--train", so.train_path, "buyer training CSV");
    score->add_option("--eval", so.eval_path, "buyer evaluation CSV");
    score->add_option("--candidates", so.candidates_path,
                      "seller candidate CSV");
    score->add_option("--model", so.model_path,
                      "model checkpoint (otherwise trained from --train)");
    score->add_option("--params", so.params_path, "CKKS params JSON file");
    score->add_option("--keys-dir", so.keys_dir,
                      "keygen output directory (seller role)");
    score->add_option("--out", so.out_path, "scores CSV path");
    score->add_option("--mode", so.mode, "plaintext|encrypted")
        ->check(CLI::IsMember({"plaintext", "encrypted"}));
    auto* t_opt =
        score->add_option("--transport", so.transport, "inproc|tcp")
            ->check(CLI::IsMember({"inproc", "tcp"}));
    auto* r_opt = score->add_option("--role", so.role,
                                    "buyer|seller|broker (multi-process TCP)")
                      ->check(CLI::IsMember({"buyer", "seller", "broker"}));
    r_opt->excludes(t_opt);
    score->add_option("--listen", so.listen_port,
                      "broker listen port (seller port is +1)");
    score->add_option("--connect", so.connect, "broker address host:port");
    score->add_flag("--verify", so.verify,
                    "add the plaintext reference column");
    score->add_flag("--exact", so.exact,
                    "exact dense-Hessian preconditioner");
    score->add_option("--seed", so.seed, "session seed");
    score->add_option("--threads", so.threads, "worker threads (0 = auto)");
    score->add_option("--damping", so.damping, "preconditioner damping");
    score->add_option("--l2", so.l2, "training L2 penalty");
    score->add_option("--lr", so.lr, "training learning rate");
    score->add_option("--epochs", so.epochs, "training epochs");

    SimulateOpts sim;
    std::uint64_t sim_seed = 0;
    CLI::App* simc =
        app.add_subcommand("simulate", "run the synthetic market experiment");
    simc->add_option("--config", sim.config_path, "market config JSON");
    simc->add_option("--out", sim.out_dir, "output directory");
    simc->add_option("--mode", sim.mode, "plaintext|encrypted")
        ->check(CLI::IsMember({"plaintext", "encrypted"}));
    auto* seed_opt =
        simc->add_option("--seed", sim_seed, "master seed (overrides config)");
    simc->add_option("--threads", sim.threads, "worker threads (0 = auto)");

    BenchOpts bo;
    CLI::App* bench =
        app.add_subcommand("bench", "measure encrypted-scoring overhead");
    bench->add_option("--params", bo.params_path, "CKKS params JSON file");
    bench->add_option("--k", bo.k, "projected dimension");
    bench->add_option("--batches", bo.batches, "batch sizes");
    bench->add_option("--mode", bo.mode, "plaintext|encrypted")
        ->check(CLI::IsMember({"plaintext", "encrypted"}));
    bench->add_option("--seed", bo.seed, "benchmark seed");
    bench->add_option("--threads", bo.threads, "worker threads (0 = auto)");
    bench->add_option("--out", bo.out_path, "timings CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (seed_opt->count() > 0) sim.seed = sim_seed;

    if (*key) return guarded([&] { return cmd_keygen(kg); });
    if (*score) return guarded([&] { return cmd_score(so); });
    if (*simc) return guarded([&] { return cmd_simulate(sim); });
    if (*bench) return guarded([&] { return cmd_bench(bo); });
    return 2;
}
