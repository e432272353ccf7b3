// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_PROTOCOL_MESSAGE_HPP
#define TIP_PROTOCOL_MESSAGE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace tip::protocol {

using SessionId = std::array<std::uint8_t, 16>;

enum class MsgType : std::uint8_t {
    EvalVector = 1,
    CandidateGradient = 2,
    ScoreResult = 3,
    Ack = 4,
    Error = 5,
};

const char* msg_type_name(MsgType t);

/// One protocol frame. sequence carries the candidate index for
/// CandidateGradient/ScoreResult and the candidate count for the Ack that
/// closes a stream; payload is a serialized ciphertext (or envelope) for
/// data frames and UTF-8 text for Error frames.
struct SessionMessage {
    SessionId session_id{};
    MsgType msg_type = MsgType::Ack;
    std::uint32_t sequence = 0;
    std::vector<std::uint8_t> payload;
};

/// Wire layout: session_id 16 bytes | msg_type u8 | sequence u32 |
/// payload_len u32 | payload (little-endian integers).
std::vector<std::uint8_t> serialize_message(const SessionMessage& m);
SessionMessage deserialize_message(const std::vector<std::uint8_t>& bytes);

SessionId make_session_id(std::uint64_t seed);
std::string session_id_hex(const SessionId& id);

}  // namespace tip::protocol

#endif  // TIP_PROTOCOL_MESSAGE_HPP
