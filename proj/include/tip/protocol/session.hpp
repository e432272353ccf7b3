// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_PROTOCOL_SESSION_HPP
#define TIP_PROTOCOL_SESSION_HPP

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tip/ckks/evaluator.hpp"
#include "tip/ckks/keys.hpp"
#include "tip/ckks/params.hpp"
#include "tip/influence/influence.hpp"
#include "tip/influence/model.hpp"
#include "tip/protocol/message.hpp"
#include "tip/protocol/transport.hpp"

namespace tip::protocol {

/// Public facts the buyer publishes so the seller can verify it is using
/// the same parameters and projection before encrypting anything.
struct SessionHeader {
    SessionId session_id{};
    std::array<std::uint8_t, 32> params_hash{};
    std::uint32_t k = 0;
    std::array<std::uint8_t, 32> projection_checksum{};
};

/// Buyer: the only role holding secret-key material.
struct BuyerState {
    std::shared_ptr<const ckks::Context> ctx;
    ckks::KeySet keys;
    SessionHeader header;
    influence::EvalVector v_eval;  // plaintext copy, never leaves the buyer
};

/// Seller: public key only; the type has no field that could hold a secret
/// key or an evaluation-key set.
struct SellerState {
    std::shared_ptr<const ckks::Context> ctx;
    ckks::PublicKey public_key;
    influence::Model model;  // public parameters
    influence::ProjectionOperator proj;
    SessionHeader header;
    bool normalize_gradients = false;  // optional unit-norm toggle
};

/// Broker: evaluation keys and ciphertexts only; no field can hold a secret
/// key or any plaintext value.
struct BrokerState {
    std::shared_ptr<const ckks::Context> ctx;
    ckks::EvalKeys eval_keys;
    ckks::Ciphertext ct_eval;
    SessionId session_id{};
    std::uint32_t k = 0;
    bool ready = false;
};

std::array<std::uint8_t, 32> projection_checksum(
    const influence::ProjectionOperator& proj);

/// Phase 1. Builds the preconditioned evaluation vector, encrypts it, and
/// frames it together with the evaluation keys (only the buyer can generate
/// them) and the session header fields.
std::pair<BuyerState, SessionMessage> buyer_setup(
    const influence::Model& model, const influence::Dataset& eval_set,
    const influence::ProjectionOperator& proj,
    const influence::KfacState& kfac, const ckks::CkksParams& params,
    std::uint64_t seed, double damping);

/// Same phase with a caller-supplied evaluation vector (e.g. the exact
/// dense-Hessian preconditioned variant).
std::pair<BuyerState, SessionMessage> buyer_setup(
    const influence::EvalVector& v_eval,
    const influence::ProjectionOperator& proj, const ckks::CkksParams& params,
    std::uint64_t seed);

/// Seller-side session join; throws DimensionMismatch when the local
/// projection disagrees with the buyer's published k or checksum.
SellerState make_seller(std::shared_ptr<const ckks::Context> ctx,
                        const ckks::PublicKey& pk,
                        const influence::Model& model,
                        const influence::ProjectionOperator& proj,
                        const SessionHeader& header);

/// Phase 2. One CandidateGradient frame per candidate, sequence = index.
std::vector<SessionMessage> seller_prepare(
    const SellerState& seller, const influence::Dataset& candidates,
    std::uint64_t seed);

/// Broker ingestion of the Phase-1 frame (exactly once per session).
BrokerState broker_init(std::shared_ptr<const ckks::Context> ctx,
                        const SessionMessage& eval_frame);

/// Phase 3. Pure blind scoring of one candidate frame; safe to run for
/// many candidates in parallel.
SessionMessage broker_score(const BrokerState& broker,
                            const SessionMessage& candidate);

struct FinalScores {
    std::vector<double> s_hat;               // by candidate index
    std::vector<std::uint32_t> by_utility;   // descending -s_hat, ties by idx
};

/// Phase 4. Decrypt slot 0 of every ScoreResult and negate. Throws
/// MissingScore when any sequence in [0, expected) is absent.
FinalScores buyer_finalize(const BuyerState& buyer,
                           const std::vector<SessionMessage>& results,
                           std::uint32_t expected);

// ---- orchestration ----

enum class TransportKind { InProc, Tcp };

struct SessionConfig {
    ckks::CkksParams params;
    influence::Model model;
    influence::Dataset eval_set;
    influence::Dataset candidates;
    influence::ProjectionOperator proj;
    influence::KfacState kfac;
    // when set, used verbatim as the buyer's query vector instead of the
    // K-FAC preconditioned default
    std::optional<influence::EvalVector> eval_vector;
    double damping = 1e-3;
    std::uint64_t seed = 1;
    int threads = 0;  // 0 -> hardware concurrency
    TransportKind transport = TransportKind::InProc;
    int tcp_port = 0;  // 0 -> ephemeral loopback ports
};

struct SessionReport {
    std::vector<double> encrypted_scores;  // s_hat by candidate index
    std::vector<double> plaintext_scores;  // same math without encryption
    std::vector<std::uint32_t> by_utility;
    double encrypted_seconds = 0.0;
    double plaintext_seconds = 0.0;
    double per_candidate_seconds = 0.0;
    std::vector<std::string> log;  // JSON lines, one event per line
};

/// Runs Phases 1-4 once across three roles over the chosen transport and
/// reports scores plus wall-clock overhead against the plaintext path.
SessionReport run_session(const SessionConfig& cfg);

// Role drivers for multi-process TCP deployments (also used internally by
// run_session's loopback threads).
FinalScores run_buyer_role(Channel& broker, const BuyerState& buyer,
                           const SessionMessage& eval_frame,
                           std::vector<std::string>* log = nullptr);
void run_seller_role(Channel& broker, const SellerState& seller,
                     const influence::Dataset& candidates, std::uint64_t seed,
                     std::vector<std::string>* log = nullptr);
void run_broker_role(Channel& buyer, Channel& seller,
                     std::shared_ptr<const ckks::Context> ctx, int threads,
                     std::vector<std::string>* log = nullptr);

}  // namespace tip::protocol

#endif  // TIP_PROTOCOL_SESSION_HPP
