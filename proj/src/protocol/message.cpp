// SPDX-License-Identifier: Apache-2.0

#include "tip/protocol/message.hpp"

#include <cstdio>

#include "tip/common/binio.hpp"
#include "tip/common/error.hpp"
#include "tip/common/rng.hpp"

namespace tip::protocol {

const char* msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::EvalVector: return "EvalVector";
        case MsgType::CandidateGradient: return "CandidateGradient";
        case MsgType::ScoreResult: return "ScoreResult";
        case MsgType::Ack: return "Ack";
        case MsgType::Error: return "Error";
    }
    return "Unknown";
}

std::vector<std::uint8_t> serialize_message(const SessionMessage& m) {
    ByteWriter w;
    w.bytes(m.session_id.data(), m.session_id.size());
    w.u8(static_cast<std::uint8_t>(m.msg_type));
    w.u32(m.sequence);
    w.u32(static_cast<std::uint32_t>(m.payload.size()));
    w.bytes(m.payload.data(), m.payload.size());
    return w.take();
}

SessionMessage deserialize_message(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    SessionMessage m;
    r.bytes(m.session_id.data(), m.session_id.size());
    const std::uint8_t t = r.u8();
    if (t < 1 || t > 5)
        fail(ErrorCode::MalformedFrame, "unknown message type");
    m.msg_type = static_cast<MsgType>(t);
    m.sequence = r.u32();
    const std::uint32_t len = r.u32();
    if (len != r.remaining())
        fail(ErrorCode::MalformedFrame, "payload length mismatch");
    m.payload.resize(len);
    if (len) r.bytes(m.payload.data(), len);
    return m;
}

SessionId make_session_id(std::uint64_t seed) {
    SessionId id{};
    const std::uint64_t a = mix64(seed);
    const std::uint64_t b = mix64(a ^ 0x5e5510ULL);
    for (int i = 0; i < 8; ++i) {
        id[i] = static_cast<std::uint8_t>(a >> (8 * i));
        id[8 + i] = static_cast<std::uint8_t>(b >> (8 * i));
    }
    return id;
}

std::string session_id_hex(const SessionId& id) {
    std::string s(32, '0');
    for (std::size_t i = 0; i < id.size(); ++i)
        std::snprintf(s.data() + 2 * i, 3, "%02x", id[i]);
    return s;
}

}  // namespace tip::protocol
