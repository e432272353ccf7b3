// SPDX-License-Identifier: Apache-2.0

#include "tip/protocol/session.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "tip/ckks/serialize.hpp"
#include "tip/common/binio.hpp"
#include "tip/common/error.hpp"
#include "tip/common/hash.hpp"
#include "tip/common/rng.hpp"
#include "tip/influence/io.hpp"

namespace tip::protocol {

namespace {

constexpr char kEnvelopeMagic[4] = {'T', 'I', 'P', 'E'};
constexpr std::uint16_t kEnvelopeVersion = 1;

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

/// Per-thread JSON-lines event sink; merged and time-sorted afterwards.
struct RoleLog {
    std::vector<std::string>* out = nullptr;
    std::string role;

    void add(const std::string& phase, const char* msg_type,
             std::size_t bytes) const {
        if (!out) return;
        nlohmann::json j;
        j["timestamp"] = now_seconds();
        j["role"] = role;
        j["phase"] = phase;
        j["msg_type"] = msg_type;
        j["bytes"] = bytes;
        out->push_back(j.dump());
    }
};

std::vector<std::uint8_t> make_envelope(const SessionHeader& header,
                                        const std::vector<std::uint8_t>& ek,
                                        const std::vector<std::uint8_t>& ct) {
    ByteWriter w;
    w.magic(kEnvelopeMagic);
    w.u16(kEnvelopeVersion);
    w.u32(header.k);
    w.bytes(header.projection_checksum.data(), 32);
    w.u32(static_cast<std::uint32_t>(ek.size()));
    w.bytes(ek.data(), ek.size());
    w.u32(static_cast<std::uint32_t>(ct.size()));
    w.bytes(ct.data(), ct.size());
    return w.take();
}

struct Envelope {
    std::uint32_t k = 0;
    std::array<std::uint8_t, 32> projection_checksum{};
    std::vector<std::uint8_t> eval_keys;
    std::vector<std::uint8_t> ct_eval;
};

Envelope parse_envelope(const std::vector<std::uint8_t>& payload) {
    ByteReader r(payload);
    r.expect_magic(kEnvelopeMagic);
    if (r.u16() != kEnvelopeVersion)
        fail(ErrorCode::VersionMismatch, "unsupported envelope version");
    Envelope e;
    e.k = r.u32();
    r.bytes(e.projection_checksum.data(), 32);
    const std::uint32_t ek_len = r.u32();
    if (ek_len > r.remaining())
        fail(ErrorCode::MalformedFrame, "truncated eval keys");
    e.eval_keys.resize(ek_len);
    r.bytes(e.eval_keys.data(), ek_len);
    const std::uint32_t ct_len = r.u32();
    if (ct_len != r.remaining())
        fail(ErrorCode::MalformedFrame, "truncated eval ciphertext");
    e.ct_eval.resize(ct_len);
    r.bytes(e.ct_eval.data(), ct_len);
    return e;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

ckks::Ciphertext encrypt_vector(const ckks::Context& ctx,
                                const ckks::PublicKey& pk,
                                const Eigen::VectorXd& values, Rng& rng) {
    const ckks::Plaintext pt =
        ckks::encode(ctx, to_std(values), ctx.max_level());
    return ckks::encrypt(ctx, pk, pt, rng);
}

void check_session(const SessionId& want, const SessionMessage& m) {
    if (m.session_id != want)
        fail(ErrorCode::ProtocolViolation, "frame from a different session");
}

[[noreturn]] void abort_with(Channel& a, Channel* b, const SessionId& id,
                             std::uint32_t seq, const std::string& what) {
    SessionMessage err;
    err.session_id = id;
    err.msg_type = MsgType::Error;
    err.sequence = seq;
    err.payload.assign(what.begin(), what.end());
    a.send(err);
    if (b) b->send(err);
    fail(ErrorCode::ProtocolViolation, "session aborted: " + what);
}

}  // namespace

std::array<std::uint8_t, 32> projection_checksum(
    const influence::ProjectionOperator& proj) {
    return sha256(influence::serialize_projection(proj));
}

std::pair<BuyerState, SessionMessage> buyer_setup(
    const influence::Model& model, const influence::Dataset& eval_set,
    const influence::ProjectionOperator& proj,
    const influence::KfacState& kfac, const ckks::CkksParams& params,
    std::uint64_t seed, double damping) {
    return buyer_setup(influence::preconditioned_eval_vector(
                           model, eval_set, proj, kfac, damping),
                       proj, params, seed);
}

std::pair<BuyerState, SessionMessage> buyer_setup(
    const influence::EvalVector& v_eval,
    const influence::ProjectionOperator& proj, const ckks::CkksParams& params,
    std::uint64_t seed) {
    BuyerState buyer;
    buyer.ctx = std::make_shared<ckks::Context>(params);
    buyer.keys =
        ckks::keygen(*buyer.ctx, derive_seed(seed, 0x6b657973ULL));  // "keys"
    buyer.v_eval = v_eval;
    const std::size_t k = proj.total_dim();
    if (static_cast<std::size_t>(v_eval.values.size()) != k)
        fail(ErrorCode::DimensionMismatch,
             "evaluation vector does not match the projection dimension");
    if (k > buyer.ctx->slot_count())
        fail(ErrorCode::InvalidParams, "projected dimension exceeds slots");

    buyer.header.session_id = make_session_id(seed);
    buyer.header.params_hash = buyer.ctx->params_hash();
    buyer.header.k = static_cast<std::uint32_t>(k);
    buyer.header.projection_checksum = projection_checksum(proj);

    Rng rng = make_rng(derive_seed(seed, 0x6576616cULL));  // "eval"
    const ckks::Ciphertext ct =
        encrypt_vector(*buyer.ctx, buyer.keys.public_key, buyer.v_eval.values,
                       rng);

    SessionMessage msg;
    msg.session_id = buyer.header.session_id;
    msg.msg_type = MsgType::EvalVector;
    msg.sequence = 0;
    msg.payload = make_envelope(
        buyer.header, ckks::serialize_eval_keys(*buyer.ctx, buyer.keys.eval_keys),
        ckks::serialize_ciphertext(*buyer.ctx, ct));
    return {std::move(buyer), std::move(msg)};
}

SellerState make_seller(std::shared_ptr<const ckks::Context> ctx,
                        const ckks::PublicKey& pk,
                        const influence::Model& model,
                        const influence::ProjectionOperator& proj,
                        const SessionHeader& header) {
    if (ctx->params_hash() != header.params_hash)
        fail(ErrorCode::ParamsMismatch, "seller params disagree with buyer");
    if (proj.total_dim() != header.k)
        fail(ErrorCode::DimensionMismatch,
             "seller projection dimension disagrees with published k");
    if (projection_checksum(proj) != header.projection_checksum)
        fail(ErrorCode::DimensionMismatch,
             "seller projection checksum disagrees with buyer");
    SellerState s;
    s.ctx = std::move(ctx);
    s.public_key = pk;
    s.model = model;
    s.proj = proj;
    s.header = header;
    return s;
}

std::vector<SessionMessage> seller_prepare(
    const SellerState& seller, const influence::Dataset& candidates,
    std::uint64_t seed) {
    std::vector<SessionMessage> out;
    out.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        Eigen::VectorXd g = influence::project_gradient(
            influence::per_example_gradient(seller.model, candidates[i]),
            seller.proj);
        if (seller.normalize_gradients) {
            const double n = g.norm();
            if (n > 0) g /= n;
        }
        Rng rng = make_rng(derive_seed(seed, 0x63616e64ULL, i));  // "cand"
        const ckks::Ciphertext ct =
            encrypt_vector(*seller.ctx, seller.public_key, g, rng);
        SessionMessage m;
        m.session_id = seller.header.session_id;
        m.msg_type = MsgType::CandidateGradient;
        m.sequence = static_cast<std::uint32_t>(i);
        m.payload = ckks::serialize_ciphertext(*seller.ctx, ct);
        out.push_back(std::move(m));
    }
    return out;
}

BrokerState broker_init(std::shared_ptr<const ckks::Context> ctx,
                        const SessionMessage& eval_frame) {
    if (eval_frame.msg_type != MsgType::EvalVector)
        fail(ErrorCode::ProtocolViolation,
             "session must start with an EvalVector frame");
    const Envelope env = parse_envelope(eval_frame.payload);
    BrokerState b;
    b.ctx = std::move(ctx);
    b.eval_keys = ckks::deserialize_eval_keys(env.eval_keys, *b.ctx);
    b.ct_eval = ckks::deserialize_ciphertext(env.ct_eval, *b.ctx);
    b.session_id = eval_frame.session_id;
    b.k = env.k;
    b.ready = true;
    return b;
}

SessionMessage broker_score(const BrokerState& broker,
                            const SessionMessage& candidate) {
    if (!broker.ready)
        fail(ErrorCode::ProtocolViolation, "scoring before EvalVector");
    if (candidate.msg_type != MsgType::CandidateGradient)
        fail(ErrorCode::ProtocolViolation, "expected a CandidateGradient");
    check_session(broker.session_id, candidate);
    const ckks::Ciphertext ct_i =
        ckks::deserialize_ciphertext(candidate.payload, *broker.ctx);
    const ckks::Ciphertext prod =
        ckks::he_mul(*broker.ctx, broker.ct_eval, ct_i, broker.eval_keys);
    const ckks::Ciphertext sum = ckks::rotate_and_sum(
        *broker.ctx, prod, prod.slot_count_used, broker.eval_keys);
    SessionMessage m;
    m.session_id = broker.session_id;
    m.msg_type = MsgType::ScoreResult;
    m.sequence = candidate.sequence;
    m.payload = ckks::serialize_ciphertext(*broker.ctx, sum);
    return m;
}

FinalScores buyer_finalize(const BuyerState& buyer,
                           const std::vector<SessionMessage>& results,
                           std::uint32_t expected) {
    std::map<std::uint32_t, const SessionMessage*> by_seq;
    for (const auto& m : results) {
        if (m.msg_type != MsgType::ScoreResult)
            fail(ErrorCode::ProtocolViolation, "expected a ScoreResult");
        check_session(buyer.header.session_id, m);
        by_seq[m.sequence] = &m;
    }
    std::string missing;
    for (std::uint32_t i = 0; i < expected; ++i)
        if (!by_seq.count(i)) missing += " " + std::to_string(i);
    if (!missing.empty())
        fail(ErrorCode::MissingScore, "missing score(s):" + missing);

    FinalScores out;
    out.s_hat.resize(expected);
    for (std::uint32_t i = 0; i < expected; ++i) {
        const ckks::Ciphertext ct =
            ckks::deserialize_ciphertext(by_seq[i]->payload, *buyer.ctx);
        const std::vector<double> slots =
            ckks::decrypt_values(*buyer.ctx, buyer.keys.secret_key, ct);
        out.s_hat[i] = -slots.at(0);
    }
    out.by_utility.resize(expected);
    std::iota(out.by_utility.begin(), out.by_utility.end(), 0u);
    std::stable_sort(out.by_utility.begin(), out.by_utility.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                         return out.s_hat[a] < out.s_hat[b];  // utility desc
                     });
    return out;
}

FinalScores run_buyer_role(Channel& broker, const BuyerState& buyer,
                           const SessionMessage& eval_frame,
                           std::vector<std::string>* log) {
    RoleLog rl{log, "buyer"};
    broker.send(eval_frame);
    rl.add("phase1", msg_type_name(eval_frame.msg_type),
           eval_frame.payload.size());

    std::vector<SessionMessage> results;
    std::uint32_t expected = 0;
    for (;;) {
        SessionMessage m = broker.recv();
        check_session(buyer.header.session_id, m);
        if (m.msg_type == MsgType::Error)
            fail(ErrorCode::ProtocolViolation,
                 "session aborted: " +
                     std::string(m.payload.begin(), m.payload.end()));
        if (m.msg_type == MsgType::Ack) {
            expected = m.sequence;
            break;
        }
        rl.add("phase3", msg_type_name(m.msg_type), m.payload.size());
        results.push_back(std::move(m));
    }
    FinalScores scores = buyer_finalize(buyer, results, expected);
    rl.add("phase4", "Ack", 0);
    return scores;
}

void run_seller_role(Channel& broker, const SellerState& seller,
                     const influence::Dataset& candidates, std::uint64_t seed,
                     std::vector<std::string>* log) {
    RoleLog rl{log, "seller"};
    const std::vector<SessionMessage> frames =
        seller_prepare(seller, candidates, seed);
    for (const auto& m : frames) {
        broker.send(m);
        rl.add("phase2", msg_type_name(m.msg_type), m.payload.size());
    }
    SessionMessage done;
    done.session_id = seller.header.session_id;
    done.msg_type = MsgType::Ack;
    done.sequence = static_cast<std::uint32_t>(frames.size());
    broker.send(done);
    rl.add("phase2", "Ack", 0);

    const SessionMessage fin = broker.recv();
    if (fin.msg_type == MsgType::Error)
        fail(ErrorCode::ProtocolViolation,
             "session aborted: " +
                 std::string(fin.payload.begin(), fin.payload.end()));
}

void run_broker_role(Channel& buyer, Channel& seller,
                     std::shared_ptr<const ckks::Context> ctx, int threads,
                     std::vector<std::string>* log) {
    RoleLog rl{log, "broker"};
    const SessionMessage eval_frame = buyer.recv();
    rl.add("phase1", msg_type_name(eval_frame.msg_type),
           eval_frame.payload.size());
    BrokerState state;
    try {
        state = broker_init(std::move(ctx), eval_frame);
    } catch (const TipError& e) {
        abort_with(buyer, &seller, eval_frame.session_id, 0, e.what());
    }

    std::vector<SessionMessage> candidates;
    std::uint32_t expected = 0;
    for (;;) {
        SessionMessage m = seller.recv();
        if (m.msg_type == MsgType::Error)
            abort_with(buyer, nullptr, state.session_id, m.sequence,
                       std::string(m.payload.begin(), m.payload.end()));
        if (m.msg_type == MsgType::Ack) {
            expected = m.sequence;
            break;
        }
        if (m.msg_type != MsgType::CandidateGradient ||
            m.session_id != state.session_id)
            abort_with(buyer, &seller, state.session_id, m.sequence,
                       "unexpected frame during candidate upload");
        rl.add("phase2", msg_type_name(m.msg_type), m.payload.size());
        candidates.push_back(std::move(m));
    }
    if (candidates.size() != expected)
        abort_with(buyer, &seller, state.session_id, expected,
                   "candidate count disagrees with the closing Ack");

    // parallel blind scoring: pure given (ct_eval, eval keys)
    std::vector<SessionMessage> results(candidates.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    std::uint32_t bad_seq = 0;
    int n_threads = threads > 0
                        ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    n_threads = std::min<int>(n_threads, static_cast<int>(candidates.size()));
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= candidates.size()) return;
                try {
                    results[i] = broker_score(state, candidates[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!first_error) {
                        first_error = std::current_exception();
                        bad_seq = candidates[i].sequence;
                    }
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) {
        std::string what = "candidate scoring failed";
        try {
            std::rethrow_exception(first_error);
        } catch (const std::exception& e) {
            what = e.what();
        }
        abort_with(buyer, &seller, state.session_id, bad_seq, what);
    }

    for (const auto& r : results) {
        buyer.send(r);
        rl.add("phase3", msg_type_name(r.msg_type), r.payload.size());
    }
    SessionMessage ack;
    ack.session_id = state.session_id;
    ack.msg_type = MsgType::Ack;
    ack.sequence = expected;
    buyer.send(ack);
    seller.send(ack);
    rl.add("phase4", "Ack", 0);
}

SessionReport run_session(const SessionConfig& cfg) {
    SessionReport report;

    auto [buyer, eval_frame] =
        cfg.eval_vector
            ? buyer_setup(*cfg.eval_vector, cfg.proj, cfg.params, cfg.seed)
            : buyer_setup(cfg.model, cfg.eval_set, cfg.proj, cfg.kfac,
                          cfg.params, cfg.seed, cfg.damping);
    SellerState seller = make_seller(buyer.ctx, buyer.keys.public_key,
                                     cfg.model, cfg.proj, buyer.header);

    // plaintext reference path: identical math without encryption
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& z : cfg.candidates) {
        const Eigen::VectorXd g = influence::project_gradient(
            influence::per_example_gradient(cfg.model, z), cfg.proj);
        report.plaintext_scores.push_back(
            influence::influence_score(buyer.v_eval, g));
    }
    const auto t1 = std::chrono::steady_clock::now();
    report.plaintext_seconds =
        std::chrono::duration<double>(t1 - t0).count();

    std::vector<std::string> buyer_log, seller_log, broker_log;
    FinalScores scores;
    std::exception_ptr buyer_err, seller_err, broker_err;

    const auto t2 = std::chrono::steady_clock::now();
    if (cfg.transport == TransportKind::InProc) {
        auto [buyer_end, broker_buyer_end] = InProcChannel::make_pair();
        auto [seller_end, broker_seller_end] = InProcChannel::make_pair();
        std::thread tb([&] {
            try {
                scores = run_buyer_role(*buyer_end, buyer, eval_frame,
                                        &buyer_log);
            } catch (...) {
                buyer_err = std::current_exception();
            }
        });
        std::thread ts([&] {
            try {
                run_seller_role(*seller_end, seller, cfg.candidates, cfg.seed,
                                &seller_log);
            } catch (...) {
                seller_err = std::current_exception();
            }
        });
        std::thread tk([&] {
            try {
                run_broker_role(*broker_buyer_end, *broker_seller_end,
                                buyer.ctx, cfg.threads, &broker_log);
            } catch (...) {
                broker_err = std::current_exception();
            }
        });
        tb.join();
        ts.join();
        tk.join();
    } else {
        const int lfd_b = tcp_listen("127.0.0.1", cfg.tcp_port);
        const int lfd_s = tcp_listen(
            "127.0.0.1", cfg.tcp_port == 0 ? 0 : cfg.tcp_port + 1);
        const int port_b = tcp_local_port(lfd_b);
        const int port_s = tcp_local_port(lfd_s);
        std::thread tk([&] {
            try {
                TcpChannel cb(tcp_accept(lfd_b));
                TcpChannel cs(tcp_accept(lfd_s));
                run_broker_role(cb, cs, buyer.ctx, cfg.threads, &broker_log);
            } catch (...) {
                broker_err = std::current_exception();
            }
        });
        std::thread tb([&] {
            try {
                TcpChannel c(tcp_connect("127.0.0.1", port_b));
                scores = run_buyer_role(c, buyer, eval_frame, &buyer_log);
            } catch (...) {
                buyer_err = std::current_exception();
            }
        });
        std::thread ts([&] {
            try {
                TcpChannel c(tcp_connect("127.0.0.1", port_s));
                run_seller_role(c, seller, cfg.candidates, cfg.seed,
                                &seller_log);
            } catch (...) {
                seller_err = std::current_exception();
            }
        });
        tk.join();
        tb.join();
        ts.join();
        ::close(lfd_b);
        ::close(lfd_s);
    }
    const auto t3 = std::chrono::steady_clock::now();

    if (buyer_err) std::rethrow_exception(buyer_err);
    if (broker_err) std::rethrow_exception(broker_err);
    if (seller_err) std::rethrow_exception(seller_err);

    report.encrypted_scores = std::move(scores.s_hat);
    report.by_utility = std::move(scores.by_utility);
    report.encrypted_seconds = std::chrono::duration<double>(t3 - t2).count();
    report.per_candidate_seconds =
        cfg.candidates.empty()
            ? 0.0
            : report.encrypted_seconds /
                  static_cast<double>(cfg.candidates.size());

    report.log = std::move(buyer_log);
    report.log.insert(report.log.end(), seller_log.begin(), seller_log.end());
    report.log.insert(report.log.end(), broker_log.begin(), broker_log.end());
    std::sort(report.log.begin(), report.log.end(),
              [](const std::string& a, const std::string& b) {
                  return nlohmann::json::parse(a)["timestamp"].get<double>() <
                         nlohmann::json::parse(b)["timestamp"].get<double>();
              });
    return report;
}

}  // namespace tip::protocol
