// SPDX-License-Identifier: Apache-2.0

#include "tip/ckks/serialize.hpp"

#include <cmath>
#include <cstring>

#include "tip/common/binio.hpp"
#include "tip/common/error.hpp"

namespace tip::ckks {

namespace {

constexpr char kCiphertextMagic[4] = {'T', 'I', 'P', 'C'};
constexpr char kKeyMagic[4] = {'T', 'I', 'P', 'K'};

enum KeyComponent : std::uint8_t {
    kPublic = 1,
    kSecret = 2,
    kEval = 3,
};

void write_part(ByteWriter& w, const RnsPoly& p, std::size_t degree) {
    w.u32(static_cast<std::uint32_t>(degree));
    for (const auto& residue : p.residues)
        for (std::uint64_t v : residue) w.u64(v);
}

RnsPoly read_part(ByteReader& r, const Context& ctx, int level) {
    const std::uint32_t count = r.u32();
    if (count != ctx.degree())
        fail(ErrorCode::MalformedFrame, "coefficient count mismatch");
    RnsPoly p;
    p.residues.resize(level + 1);
    for (int j = 0; j <= level; ++j) {
        p.residues[j].resize(count);
        const std::uint64_t q = ctx.params().modulus_chain[j];
        for (std::uint32_t i = 0; i < count; ++i) {
            p.residues[j][i] = r.u64();
            if (p.residues[j][i] >= q)
                fail(ErrorCode::MalformedFrame, "residue exceeds modulus");
        }
    }
    return p;
}

void write_header(ByteWriter& w, const char magic[4], const Context& ctx) {
    w.magic(magic);
    w.u16(kWireVersion);
    w.bytes(ctx.params_hash().data(), 32);
}

void read_header(ByteReader& r, const char magic[4], const Context& ctx) {
    r.expect_magic(magic);
    const std::uint16_t version = r.u16();
    if (version != kWireVersion)
        fail(ErrorCode::VersionMismatch,
             "unsupported format version " + std::to_string(version));
    std::array<std::uint8_t, 32> hash{};
    r.bytes(hash.data(), 32);
    if (hash != ctx.params_hash())
        fail(ErrorCode::ParamsMismatch, "params hash mismatch");
}

// KSK entries (one gadget vector per level, polys stored NTT-domain)
void write_ksk(ByteWriter& w, const KeySwitchKey& k, std::size_t degree) {
    w.u8(static_cast<std::uint8_t>(k.by_level.size()));
    for (std::size_t l = 0; l < k.by_level.size(); ++l) {
        w.u32(static_cast<std::uint32_t>(k.by_level[l].size()));
        for (const auto& [b, a] : k.by_level[l]) {
            write_part(w, b, degree);
            write_part(w, a, degree);
        }
    }
}

KeySwitchKey read_ksk(ByteReader& r, const Context& ctx) {
    KeySwitchKey k;
    const std::uint8_t levels = r.u8();
    if (levels != ctx.max_level() + 1)
        fail(ErrorCode::MalformedFrame, "key-switch level count mismatch");
    k.by_level.resize(levels);
    for (int l = 0; l < levels; ++l) {
        const std::uint32_t count = r.u32();
        if (count != ctx.gadget_size(l))
            fail(ErrorCode::MalformedFrame, "gadget size mismatch");
        for (std::uint32_t g = 0; g < count; ++g) {
            RnsPoly b = read_part(r, ctx, l);
            RnsPoly a = read_part(r, ctx, l);
            k.by_level[l].emplace_back(std::move(b), std::move(a));
        }
    }
    return k;
}

}  // namespace

std::vector<std::uint8_t> serialize_ciphertext(const Context& ctx,
                                               const Ciphertext& ct) {
    ByteWriter w;
    write_header(w, kCiphertextMagic, ctx);
    w.u8(static_cast<std::uint8_t>(ct.level));
    w.u8(static_cast<std::uint8_t>(ct.parts.size()));
    w.f64(std::log2(ct.scale));
    w.u32(ct.slot_count_used);
    for (const auto& part : ct.parts) write_part(w, part, ctx.degree());
    return w.take();
}

Ciphertext deserialize_ciphertext(const std::vector<std::uint8_t>& bytes,
                                  const Context& ctx) {
    ByteReader r(bytes);
    read_header(r, kCiphertextMagic, ctx);
    Ciphertext ct;
    ct.level = r.u8();
    if (ct.level > ctx.max_level())
        fail(ErrorCode::MalformedFrame, "level exceeds modulus chain");
    const std::uint8_t parts = r.u8();
    if (parts < 2 || parts > 3)
        fail(ErrorCode::MalformedFrame, "unexpected part count");
    ct.scale = std::exp2(r.f64());
    ct.slot_count_used = r.u32();
    if (ct.slot_count_used > ctx.slot_count())
        fail(ErrorCode::MalformedFrame, "slot count exceeds N/2");
    for (std::uint8_t i = 0; i < parts; ++i)
        ct.parts.push_back(read_part(r, ctx, ct.level));
    if (!r.done()) fail(ErrorCode::MalformedFrame, "trailing bytes");

    // The wire format carries no noise telemetry; assign bounds that cover
    // the depth-1 multiply + log-depth rotation circuit this engine runs.
    const double slots_log =
        std::log2(static_cast<double>(ctx.slot_count())) + 1.0;
    ct.msg_bound =
        static_cast<double>(ctx.params().modulus_chain[0]) / (2.0 * ct.scale);
    ct.noise_bound =
        ctx.fresh_noise_bound() * ctx.params().scale() / ct.scale *
            static_cast<double>(ctx.slot_count()) +
        (ctx.keyswitch_noise_coeff(ct.level) * slots_log +
         ctx.rescale_noise_coeff()) /
            ct.scale;
    return ct;
}

std::vector<std::uint8_t> serialize_public_key(const Context& ctx,
                                               const PublicKey& pk) {
    ByteWriter w;
    write_header(w, kKeyMagic, ctx);
    w.u8(kPublic);
    w.u8(static_cast<std::uint8_t>(ctx.max_level()));
    write_part(w, pk.b, ctx.degree());
    write_part(w, pk.a, ctx.degree());
    return w.take();
}

PublicKey deserialize_public_key(const std::vector<std::uint8_t>& bytes,
                                 const Context& ctx) {
    ByteReader r(bytes);
    read_header(r, kKeyMagic, ctx);
    if (r.u8() != kPublic)
        fail(ErrorCode::MalformedFrame, "not a public key file");
    const int level = r.u8();
    if (level != ctx.max_level())
        fail(ErrorCode::MalformedFrame, "public key level mismatch");
    PublicKey pk;
    pk.b = read_part(r, ctx, level);
    pk.a = read_part(r, ctx, level);
    if (!r.done()) fail(ErrorCode::MalformedFrame, "trailing bytes");
    return pk;
}

std::vector<std::uint8_t> serialize_secret_key(
    const Context& ctx, const std::vector<std::int8_t>& sk) {
    ByteWriter w;
    write_header(w, kKeyMagic, ctx);
    w.u8(kSecret);
    w.u32(static_cast<std::uint32_t>(sk.size()));
    for (std::int8_t v : sk) w.u8(static_cast<std::uint8_t>(v));
    return w.take();
}

std::vector<std::int8_t> deserialize_secret_key(
    const std::vector<std::uint8_t>& bytes, const Context& ctx) {
    ByteReader r(bytes);
    read_header(r, kKeyMagic, ctx);
    if (r.u8() != kSecret)
        fail(ErrorCode::MalformedFrame, "not a secret key file");
    const std::uint32_t count = r.u32();
    if (count != ctx.degree())
        fail(ErrorCode::MalformedFrame, "secret key length mismatch");
    std::vector<std::int8_t> sk(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        sk[i] = static_cast<std::int8_t>(r.u8());
        if (sk[i] < -1 || sk[i] > 1)
            fail(ErrorCode::MalformedFrame, "secret key not ternary");
    }
    if (!r.done()) fail(ErrorCode::MalformedFrame, "trailing bytes");
    return sk;
}

std::vector<std::uint8_t> serialize_eval_keys(const Context& ctx,
                                              const EvalKeys& keys) {
    ByteWriter w;
    write_header(w, kKeyMagic, ctx);
    w.u8(kEval);
    write_ksk(w, keys.relin, ctx.degree());
    w.u32(static_cast<std::uint32_t>(keys.galois.size()));
    for (const auto& [step, ksk] : keys.galois) {
        w.u32(step);
        write_ksk(w, ksk, ctx.degree());
    }
    return w.take();
}

EvalKeys deserialize_eval_keys(const std::vector<std::uint8_t>& bytes,
                               const Context& ctx) {
    ByteReader r(bytes);
    read_header(r, kKeyMagic, ctx);
    if (r.u8() != kEval)
        fail(ErrorCode::MalformedFrame, "not an eval key file");
    EvalKeys keys;
    keys.relin = read_ksk(r, ctx);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t step = r.u32();
        keys.galois.emplace(step, read_ksk(r, ctx));
    }
    if (!r.done()) fail(ErrorCode::MalformedFrame, "trailing bytes");
    return keys;
}

}  // namespace tip::ckks
