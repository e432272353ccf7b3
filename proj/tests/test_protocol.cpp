// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "tip/ckks/serialize.hpp"
#include "tip/common/error.hpp"
#include "tip/common/rng.hpp"
#include "tip/influence/gradients.hpp"
#include "tip/influence/influence.hpp"
#include "tip/protocol/session.hpp"
#include "tip/protocol/transport.hpp"

using namespace tip;
using namespace tip::influence;
using namespace tip::protocol;

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

Dataset blobs(std::uint64_t seed, int n, int dim, double sep) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Dataset data;
    for (int i = 0; i < n; ++i) {
        Example z;
        z.label = (i % 2 == 0) ? 1.0 : 0.0;
        z.features =
            Eigen::VectorXd::NullaryExpr(dim, [&]() { return gauss(rng); });
        z.features[0] += (z.label > 0.5 ? sep : -sep);
        data.push_back(std::move(z));
    }
    return data;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

/// Shared scenario: a trained convex model, full-rank projection, K-FAC
/// state, and a small-ring context. Built once; every protocol test reuses it.
struct Scenario {
    ckks::CkksParams params;
    Model model;
    Dataset train, eval_set, candidates;
    KfacState kfac;
    ProjectionOperator proj;

    Scenario() {
        params = ckks::CkksParams::desk_scale();
        params.ring_degree = 1024;
        train = blobs(11, 40, 6, 1.5);
        eval_set = blobs(12, 16, 6, 1.5);
        candidates = blobs(13, 21, 6, 1.5);
        TrainConfig cfg;
        cfg.hidden_dims = {};
        cfg.lr = 0.5;
        cfg.epochs = 100;
        cfg.l2 = 0.01;
        cfg.seed = 7;
        model = tip::influence::train(train, cfg);
        kfac = estimate_kfac(model, train);
        std::vector<int> kin, kout;
        for (const auto& l : model.layers) {
            kin.push_back(static_cast<int>(l.W.cols()) + 1);
            kout.push_back(static_cast<int>(l.W.rows()));
        }
        proj = build_projection(kfac, kin, kout);
    }
};

const Scenario& scenario() {
    static Scenario s;
    return s;
}

// role isolation is enforced by construction: no seller/broker field can
// hold secret-key material
template <typename T>
concept HoldsSecretKey = requires(T t) { t.keys.secret_key; } ||
                         requires(T t) { t.secret_key; };
static_assert(HoldsSecretKey<BuyerState>);
static_assert(!HoldsSecretKey<SellerState>);
static_assert(!HoldsSecretKey<BrokerState>);

}  // namespace

TEST_CASE("session message framing round-trips every type") {
    const SessionId id = make_session_id(99);
    CHECK(session_id_hex(id).size() == 32);
    CHECK(make_session_id(99) == id);
    CHECK(make_session_id(100) != id);

    for (const MsgType t :
         {MsgType::EvalVector, MsgType::CandidateGradient, MsgType::ScoreResult,
          MsgType::Ack, MsgType::Error}) {
        SessionMessage m;
        m.session_id = id;
        m.msg_type = t;
        m.sequence = 0xdeadbeef;
        m.payload = {1, 2, 3, 250};
        const auto bytes = serialize_message(m);
        const SessionMessage back = deserialize_message(bytes);
        CHECK(back.session_id == id);
        CHECK(back.msg_type == t);
        CHECK(back.sequence == m.sequence);
        CHECK(back.payload == m.payload);
        CHECK(serialize_message(back) == bytes);
    }

    SessionMessage m;
    m.session_id = id;
    m.msg_type = MsgType::Ack;
    auto bytes = serialize_message(m);
    bytes[16] = 0;  // type byte out of range
    CHECK(code_of([&] { deserialize_message(bytes); }) ==
          ErrorCode::MalformedFrame);
    auto trunc = serialize_message(m);
    trunc.pop_back();
    CHECK(code_of([&] { deserialize_message(trunc); }) ==
          ErrorCode::MalformedFrame);
}

TEST_CASE("buyer setup is deterministic and its ciphertext holds v_eval") {
    const Scenario& sc = scenario();
    auto [buyer, frame] = buyer_setup(sc.model, sc.eval_set, sc.proj, sc.kfac,
                                      sc.params, 42, 1e-3);
    auto [buyer2, frame2] = buyer_setup(sc.model, sc.eval_set, sc.proj,
                                        sc.kfac, sc.params, 42, 1e-3);
    CHECK(serialize_message(frame) == serialize_message(frame2));
    CHECK(frame.msg_type == MsgType::EvalVector);
    CHECK(buyer.header.k == sc.proj.total_dim());

    // the broker's view decrypts (with the buyer's key) to the plaintext copy
    BrokerState broker = broker_init(buyer.ctx, frame);
    CHECK(broker.k == buyer.header.k);
    const std::vector<double> slots =
        ckks::decrypt_values(*buyer.ctx, buyer.keys.secret_key, broker.ct_eval);
    for (Eigen::Index i = 0; i < buyer.v_eval.values.size(); ++i)
        CHECK(std::abs(slots[static_cast<std::size_t>(i)] -
                       buyer.v_eval.values[i]) < 1e-4);
}

TEST_CASE("seller join validates the published projection and parameters") {
    const Scenario& sc = scenario();
    auto [buyer, frame] = buyer_setup(sc.model, sc.eval_set, sc.proj, sc.kfac,
                                      sc.params, 42, 1e-3);
    const SellerState seller = make_seller(buyer.ctx, buyer.keys.public_key,
                                           sc.model, sc.proj, buyer.header);
    CHECK(seller.header.k == buyer.header.k);

    ProjectionOperator wrong = sc.proj;
    wrong.layers[0].P_in.row(0) *= -1.0;  // same shape, different operator
    CHECK(code_of([&] {
              make_seller(buyer.ctx, buyer.keys.public_key, sc.model, wrong,
                          buyer.header);
          }) == ErrorCode::DimensionMismatch);

    ckks::CkksParams other = sc.params;
    other.ring_degree = 2048;
    auto other_ctx = std::make_shared<ckks::Context>(other);
    CHECK(code_of([&] {
              make_seller(other_ctx, buyer.keys.public_key, sc.model, sc.proj,
                          buyer.header);
          }) == ErrorCode::ParamsMismatch);
}

TEST_CASE("seller frames are deterministic with sequences 0..N-1") {
    const Scenario& sc = scenario();
    auto [buyer, frame] = buyer_setup(sc.model, sc.eval_set, sc.proj, sc.kfac,
                                      sc.params, 42, 1e-3);
    const SellerState seller = make_seller(buyer.ctx, buyer.keys.public_key,
                                           sc.model, sc.proj, buyer.header);
    const auto frames = seller_prepare(seller, sc.candidates, 42);
    const auto frames2 = seller_prepare(seller, sc.candidates, 42);
    REQUIRE(frames.size() == sc.candidates.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(frames[i].sequence == i);
        CHECK(frames[i].msg_type == MsgType::CandidateGradient);
        CHECK(serialize_message(frames[i]) == serialize_message(frames2[i]));
    }
}

TEST_CASE("blind scoring reproduces plaintext inner products") {
    const Scenario& sc = scenario();
    auto [buyer, frame] = buyer_setup(sc.model, sc.eval_set, sc.proj, sc.kfac,
                                      sc.params, 42, 1e-3);
    const SellerState seller = make_seller(buyer.ctx, buyer.keys.public_key,
                                           sc.model, sc.proj, buyer.header);
    const auto frames = seller_prepare(seller, sc.candidates, 42);
    const BrokerState broker = broker_init(buyer.ctx, frame);

    for (std::size_t i = 0; i < frames.size(); ++i) {
        const SessionMessage result = broker_score(broker, frames[i]);
        CHECK(result.msg_type == MsgType::ScoreResult);
        CHECK(result.sequence == i);
        const ckks::Ciphertext ct =
            ckks::deserialize_ciphertext(result.payload, *buyer.ctx);
        const double got =
            ckks::decrypt_values(*buyer.ctx, buyer.keys.secret_key, ct)[0];
        const Eigen::VectorXd g = project_gradient(
            per_example_gradient(sc.model, sc.candidates[i]), sc.proj);
        CHECK(std::abs(got - buyer.v_eval.values.dot(g)) < 1e-3);
    }
}

TEST_CASE("broker rejects out-of-order or malformed sessions") {
    const Scenario& sc = scenario();
    auto [buyer, frame] = buyer_setup(sc.model, sc.eval_set, sc.proj, sc.kfac,
                                      sc.params, 42, 1e-3);
    const SellerState seller = make_seller(buyer.ctx, buyer.keys.public_key,
                                           sc.model, sc.proj, buyer.header);
    const auto frames = seller_prepare(seller, sc.candidates, 42);

    // scoring before the eval frame arrived
    BrokerState cold;
    cold.ctx = buyer.ctx;
    CHECK(code_of([&] { broker_score(cold, frames[0]); }) ==
          ErrorCode::ProtocolViolation);

    // a candidate frame is not a valid session opener
    CHECK(code_of([&] { broker_init(buyer.ctx, frames[0]); }) ==
          ErrorCode::ProtocolViolation);

    // truncated envelope
    SessionMessage bad = frame;
    bad.payload.resize(bad.payload.size() / 2);
    CHECK(code_of([&] { broker_init(buyer.ctx, bad); }) ==
          ErrorCode::MalformedFrame);

    // truncated candidate ciphertext
    const BrokerState broker = broker_init(buyer.ctx, frame);
    SessionMessage tampered = frames[0];
    tampered.payload.resize(tampered.payload.size() - 9);
    CHECK(code_of([&] { broker_score(broker, tampered); }) ==
          ErrorCode::MalformedFrame);

    // frame from another session
    SessionMessage foreign = frames[0];
    foreign.session_id = make_session_id(4711);
    CHECK(code_of([&] { broker_score(broker, foreign); }) ==
          ErrorCode::ProtocolViolation);
}

TEST_CASE("buyer finalize is order independent and flags missing scores") {
    const Scenario& sc = scenario();
    auto [buyer, frame] = buyer_setup(sc.model, sc.eval_set, sc.proj, sc.kfac,
                                      sc.params, 42, 1e-3);
    const SellerState seller = make_seller(buyer.ctx, buyer.keys.public_key,
                                           sc.model, sc.proj, buyer.header);
    const auto frames = seller_prepare(seller, sc.candidates, 42);
    const BrokerState broker = broker_init(buyer.ctx, frame);

    std::vector<SessionMessage> results;
    for (const auto& f : frames) results.push_back(broker_score(broker, f));
    const std::uint32_t n = static_cast<std::uint32_t>(results.size());
    const FinalScores in_order = buyer_finalize(buyer, results, n);

    std::vector<SessionMessage> shuffled = results;
    Rng rng = make_rng(5);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const FinalScores permuted = buyer_finalize(buyer, shuffled, n);
    CHECK(permuted.s_hat == in_order.s_hat);
    CHECK(permuted.by_utility == in_order.by_utility);

    // s_hat equals the negated decrypted inner product
    for (std::size_t i = 0; i < results.size(); ++i) {
        const Eigen::VectorXd g = project_gradient(
            per_example_gradient(sc.model, sc.candidates[i]), sc.proj);
        CHECK(std::abs(in_order.s_hat[i] -
                       influence_score(buyer.v_eval, g)) < 1e-3);
    }

    // utility ranking: ascending s_hat (utility = -s_hat descending)
    for (std::size_t i = 1; i < in_order.by_utility.size(); ++i)
        CHECK(in_order.s_hat[in_order.by_utility[i - 1]] <=
              in_order.s_hat[in_order.by_utility[i]]);

    std::vector<SessionMessage> gap(results.begin(), results.end() - 2);
    CHECK(code_of([&] { buyer_finalize(buyer, gap, n); }) ==
          ErrorCode::MissingScore);
}

TEST_CASE("in-process session matches the plaintext path end to end") {
    const Scenario& sc = scenario();
    SessionConfig cfg;
    cfg.params = sc.params;
    cfg.model = sc.model;
    cfg.eval_set = sc.eval_set;
    cfg.candidates = sc.candidates;
    cfg.proj = sc.proj;
    cfg.kfac = sc.kfac;
    cfg.seed = 42;
    cfg.threads = 2;
    cfg.transport = TransportKind::InProc;
    const SessionReport rep = run_session(cfg);

    REQUIRE(rep.encrypted_scores.size() == sc.candidates.size());
    REQUIRE(rep.plaintext_scores.size() == sc.candidates.size());
    double mae = 0;
    for (std::size_t i = 0; i < rep.encrypted_scores.size(); ++i)
        mae += std::abs(rep.encrypted_scores[i] - rep.plaintext_scores[i]);
    mae /= static_cast<double>(rep.encrypted_scores.size());
    CHECK(mae < 1e-3);
    CHECK(pearson(rep.encrypted_scores, rep.plaintext_scores) > 0.999);
    CHECK(rep.by_utility.size() == sc.candidates.size());
    CHECK(rep.encrypted_seconds > 0.0);
    CHECK(rep.per_candidate_seconds > 0.0);

    // the time-ordered log opens with phase1 and closes with phase4, and
    // every event carries the expected fields
    REQUIRE(!rep.log.empty());
    const auto first = nlohmann::json::parse(rep.log.front());
    const auto last = nlohmann::json::parse(rep.log.back());
    CHECK(first["phase"] == "phase1");
    CHECK(last["phase"] == "phase4");
    double prev_ts = 0.0;
    for (const auto& line : rep.log) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("timestamp"));
        CHECK(j.contains("role"));
        CHECK(j.contains("msg_type"));
        CHECK(j.contains("bytes"));
        CHECK(j["timestamp"].get<double>() >= prev_ts);
        prev_ts = j["timestamp"].get<double>();
    }
}

TEST_CASE("tcp loopback transport yields bitwise identical scores") {
    const Scenario& sc = scenario();
    SessionConfig cfg;
    cfg.params = sc.params;
    cfg.model = sc.model;
    cfg.eval_set = sc.eval_set;
    cfg.candidates = Dataset(sc.candidates.begin(), sc.candidates.begin() + 8);
    cfg.proj = sc.proj;
    cfg.kfac = sc.kfac;
    cfg.seed = 42;
    cfg.threads = 2;

    cfg.transport = TransportKind::InProc;
    const SessionReport inproc = run_session(cfg);
    cfg.transport = TransportKind::Tcp;
    const SessionReport tcp = run_session(cfg);
    CHECK(tcp.encrypted_scores == inproc.encrypted_scores);
    CHECK(tcp.by_utility == inproc.by_utility);
}

TEST_CASE("tampered upload aborts the session with error frames to both") {
    const Scenario& sc = scenario();
    auto [buyer, eval_frame] = buyer_setup(sc.model, sc.eval_set, sc.proj,
                                           sc.kfac, sc.params, 42, 1e-3);
    const SellerState seller = make_seller(buyer.ctx, buyer.keys.public_key,
                                           sc.model, sc.proj, buyer.header);
    auto frames = seller_prepare(
        seller, Dataset(sc.candidates.begin(), sc.candidates.begin() + 3), 42);
    frames[1].payload.resize(frames[1].payload.size() - 5);  // tamper

    auto [buyer_end, broker_buyer] = InProcChannel::make_pair();
    auto [seller_end, broker_seller] = InProcChannel::make_pair();
    ErrorCode broker_code = ErrorCode::InvalidParams;
    std::thread broker_thread([&] {
        try {
            run_broker_role(*broker_buyer, *broker_seller, buyer.ctx, 1);
        } catch (const TipError& e) {
            broker_code = e.code();
        }
    });
    buyer_end->send(eval_frame);
    for (const auto& f : frames) seller_end->send(f);
    SessionMessage close;
    close.session_id = buyer.header.session_id;
    close.msg_type = MsgType::Ack;
    close.sequence = static_cast<std::uint32_t>(frames.size());
    seller_end->send(close);
    broker_thread.join();

    CHECK(broker_code == ErrorCode::ProtocolViolation);
    CHECK(buyer_end->recv().msg_type == MsgType::Error);
    CHECK(seller_end->recv().msg_type == MsgType::Error);
}

TEST_CASE("tcp channel frames survive the wire and honor timeouts") {
    const int lfd = tcp_listen("127.0.0.1", 0);
    const int port = tcp_local_port(lfd);
    CHECK(port > 0);
    SessionMessage got;
    std::thread server([&] {
        TcpChannel ch(tcp_accept(lfd));
        got = ch.recv();
        ch.send(got);
    });
    TcpChannel client(tcp_connect("127.0.0.1", port), 2000);
    SessionMessage m;
    m.session_id = make_session_id(1);
    m.msg_type = MsgType::ScoreResult;
    m.sequence = 7;
    m.payload.assign(1000, 0xab);
    client.send(m);
    const SessionMessage echo = client.recv();
    server.join();
    CHECK(serialize_message(echo) == serialize_message(m));
    CHECK(serialize_message(got) == serialize_message(m));

    // nothing more arrives: recv must time out rather than hang
    std::thread idle_server([&] {
        const int fd = tcp_accept(lfd);
        ::usleep(300000);
        ::close(fd);
    });
    TcpChannel slow(tcp_connect("127.0.0.1", port), 100);
    CHECK(code_of([&] { slow.recv(); }) == ErrorCode::TransportTimeout);
    idle_server.join();
    ::close(lfd);
}
