// SPDX-License-Identifier: Apache-2.0

#include "tip/ckks/evaluator.hpp"

#include <algorithm>
#include <cmath>

#include "tip/common/error.hpp"

namespace tip::ckks {

namespace {

std::uint32_t next_pow2(std::size_t k) {
    std::size_t p = 1;
    while (p < k) p <<= 1;
    return static_cast<std::uint32_t>(std::max<std::size_t>(p, 1));
}

bool scale_equal(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

// ---- minimal 256-bit unsigned helpers for the centered CRT lift ----

struct U256 {
    std::uint64_t w[4] = {0, 0, 0, 0};
};

void add_into(U256& a, const U256& b) {
    unsigned __int128 carry = 0;
    for (int i = 0; i < 4; ++i) {
        unsigned __int128 s = carry + a.w[i] + b.w[i];
        a.w[i] = static_cast<std::uint64_t>(s);
        carry = s >> 64;
    }
}

bool geq(const U256& a, const U256& b) {
    for (int i = 3; i >= 0; --i) {
        if (a.w[i] != b.w[i]) return a.w[i] > b.w[i];
    }
    return true;
}

void sub_into(U256& a, const U256& b) {
    unsigned __int128 borrow = 0;
    for (int i = 0; i < 4; ++i) {
        unsigned __int128 d = static_cast<unsigned __int128>(a.w[i]) - b.w[i] -
                              borrow;
        a.w[i] = static_cast<std::uint64_t>(d);
        borrow = (d >> 64) & 1;
    }
}

U256 mul_u64(const U256& a, std::uint64_t m) {
    U256 r;
    unsigned __int128 carry = 0;
    for (int i = 0; i < 4; ++i) {
        unsigned __int128 p = static_cast<unsigned __int128>(a.w[i]) * m + carry;
        r.w[i] = static_cast<std::uint64_t>(p);
        carry = p >> 64;
    }
    return r;
}

double to_double(const U256& a) {
    double v = 0.0;
    for (int i = 3; i >= 0; --i) v = v * 18446744073709551616.0 + a.w[i];
    return v;
}

/// Per-level constants for exact CRT recomposition.
struct CrtLift {
    U256 big_q;          // product of active primes
    U256 half_q;
    std::vector<U256> qhat;         // Q / q_j
    std::vector<std::uint64_t> qhat_inv;  // (Q/q_j)^{-1} mod q_j
};

CrtLift make_lift(const Context& ctx, int level) {
    const auto& chain = ctx.params().modulus_chain;
    CrtLift lift;
    lift.big_q.w[0] = 1;
    for (int j = 0; j <= level; ++j) lift.big_q = mul_u64(lift.big_q, chain[j]);
    lift.half_q = lift.big_q;
    // divide by two
    for (int i = 0; i < 4; ++i) {
        lift.half_q.w[i] >>= 1;
        if (i + 1 < 4 && (lift.half_q.w[i + 1] & 1))
            lift.half_q.w[i] |= 0x8000000000000000ULL;
    }
    for (int j = 0; j <= level; ++j) {
        U256 h;
        h.w[0] = 1;
        for (int m = 0; m <= level; ++m)
            if (m != j) h = mul_u64(h, chain[m]);
        std::uint64_t hm = 1 % chain[j];
        for (int m = 0; m <= level; ++m)
            if (m != j) hm = mul_mod(hm, chain[m] % chain[j], chain[j]);
        lift.qhat.push_back(h);
        lift.qhat_inv.push_back(inv_mod(hm, chain[j]));
    }
    return lift;
}

/// Centered coefficients of an RNS polynomial as doubles.
std::vector<double> lift_centered(const Context& ctx, const RnsPoly& p) {
    const int level = p.level();
    const CrtLift lift = make_lift(ctx, level);
    const auto& chain = ctx.params().modulus_chain;
    const std::size_t n = ctx.degree();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        U256 acc;
        for (int j = 0; j <= level; ++j) {
            const std::uint64_t y =
                mul_mod(p.residues[j][i], lift.qhat_inv[j], chain[j]);
            add_into(acc, mul_u64(lift.qhat[j], y));
        }
        while (geq(acc, lift.big_q)) sub_into(acc, lift.big_q);
        if (geq(acc, lift.half_q)) {
            // negative representative
            U256 neg = lift.big_q;
            sub_into(neg, acc);
            out[i] = -to_double(neg);
        } else {
            out[i] = to_double(acc);
        }
    }
    return out;
}

}  // namespace

Plaintext encode(const Context& ctx, const std::vector<double>& values,
                 int level) {
    const std::size_t slots = ctx.slot_count();
    if (values.size() > slots)
        fail(ErrorCode::InvalidParams, "too many values for slot count");
    if (level < 0 || level > ctx.max_level())
        fail(ErrorCode::LevelMismatch, "encode level out of range");

    const double scale = ctx.params().scale();
    double max_abs = 0.0;
    for (double v : values) max_abs = std::max(max_abs, std::abs(v));
    // headroom: the scaled message must stay well inside the base prime
    const double headroom =
        static_cast<double>(ctx.params().modulus_chain[0]) / 2.0;
    if (max_abs * scale >= headroom)
        fail(ErrorCode::Overflow, "scaled values exceed modulus headroom");

    std::vector<double> slot_vals(slots, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i)
        slot_vals[i] = values[i] * scale;
    const std::vector<double> coeffs = ctx.embed_inverse(slot_vals);

    std::vector<std::int64_t> rounded(ctx.degree());
    for (std::size_t i = 0; i < ctx.degree(); ++i)
        rounded[i] = static_cast<std::int64_t>(std::llround(coeffs[i]));

    Plaintext pt;
    pt.poly = ctx.from_signed(rounded, level);
    pt.scale = scale;
    pt.level = level;
    pt.slot_count_used = next_pow2(values.size());
    pt.msg_bound = max_abs;
    return pt;
}

std::vector<double> decode_all(const Context& ctx, const Plaintext& pt) {
    if (pt.scale <= 0) fail(ErrorCode::InvalidParams, "plaintext scale <= 0");
    const std::vector<double> coeffs = lift_centered(ctx, pt.poly);
    std::vector<double> slots = ctx.embed_forward(coeffs);
    const double inv = 1.0 / pt.scale;
    for (double& v : slots) v *= inv;
    return slots;
}

std::vector<double> decode(const Context& ctx, const Plaintext& pt) {
    std::vector<double> slots = decode_all(ctx, pt);
    slots.resize(std::min<std::size_t>(pt.slot_count_used, slots.size()));
    return slots;
}

Ciphertext encrypt(const Context& ctx, const PublicKey& pk, const Plaintext& pt,
                   Rng& rng) {
    const int l = pt.level;
    const RnsPoly u = ctx.from_signed(ctx.sample_ternary(rng), l);
    const RnsPoly e0 = ctx.from_signed(ctx.sample_error(rng), l);
    const RnsPoly e1 = ctx.from_signed(ctx.sample_error(rng), l);

    Ciphertext ct;
    RnsPoly c0 = ctx.add(ctx.multiply(ctx.mod_down(pk.b, l), u), e0);
    ctx.add_inplace(c0, pt.poly);
    RnsPoly c1 = ctx.add(ctx.multiply(ctx.mod_down(pk.a, l), u), e1);
    ct.parts.push_back(std::move(c0));
    ct.parts.push_back(std::move(c1));
    ct.scale = pt.scale;
    ct.level = l;
    ct.slot_count_used = pt.slot_count_used;
    ct.noise_bound = ctx.fresh_noise_bound() * ctx.params().scale() / pt.scale;
    ct.msg_bound = pt.msg_bound;
    return ct;
}

Plaintext decrypt(const Context& ctx, const std::vector<std::int8_t>& sk,
                  const Ciphertext& ct) {
    if (ct.level > ctx.max_level())
        fail(ErrorCode::LevelMismatch, "ciphertext level exceeds chain");
    if (ct.parts.size() != 2)
        fail(ErrorCode::InvalidParams, "decrypt expects a 2-part ciphertext");
    const RnsPoly s = secret_poly(ctx, sk, ct.level);
    Plaintext pt;
    pt.poly = ctx.add(ct.parts[0], ctx.multiply(ct.parts[1], s));
    pt.scale = ct.scale;
    pt.level = ct.level;
    pt.slot_count_used = ct.slot_count_used;
    pt.msg_bound = ct.msg_bound;
    return pt;
}

std::vector<double> decrypt_values(const Context& ctx,
                                   const std::vector<std::int8_t>& sk,
                                   const Ciphertext& ct) {
    return decode(ctx, decrypt(ctx, sk, ct));
}

Ciphertext he_add(const Context& ctx, const Ciphertext& a, const Ciphertext& b) {
    if (a.level != b.level)
        fail(ErrorCode::LevelMismatch, "he_add level mismatch");
    if (!scale_equal(a.scale, b.scale))
        fail(ErrorCode::ScaleMismatch, "he_add scale mismatch");
    Ciphertext c;
    c.parts.push_back(ctx.add(a.parts[0], b.parts[0]));
    c.parts.push_back(ctx.add(a.parts[1], b.parts[1]));
    c.scale = a.scale;
    c.level = a.level;
    c.slot_count_used = std::max(a.slot_count_used, b.slot_count_used);
    c.noise_bound = a.noise_bound + b.noise_bound;
    c.msg_bound = a.msg_bound + b.msg_bound;
    return c;
}

Ciphertext he_mul(const Context& ctx, const Ciphertext& a, const Ciphertext& b,
                  const EvalKeys& keys) {
    if (a.level != b.level)
        fail(ErrorCode::LevelMismatch, "he_mul level mismatch");
    if (a.level < 1)
        fail(ErrorCode::DepthExhausted, "no rescale level remains");
    if (!scale_equal(a.scale, b.scale))
        fail(ErrorCode::ScaleMismatch, "he_mul scale mismatch");
    if (keys.relin.by_level.empty())
        fail(ErrorCode::InvalidParams, "relinearization key missing");

    const RnsPoly d0 = ctx.multiply(a.parts[0], b.parts[0]);
    RnsPoly d1 = ctx.multiply(a.parts[0], b.parts[1]);
    ctx.add_inplace(d1, ctx.multiply(a.parts[1], b.parts[0]));
    const RnsPoly d2 = ctx.multiply(a.parts[1], b.parts[1]);

    auto [k0, k1] = apply_keyswitch(ctx, d2, keys.relin);
    ctx.add_inplace(k0, d0);
    ctx.add_inplace(k1, d1);

    const double tensor_scale = a.scale * b.scale;
    const double dropped =
        static_cast<double>(ctx.params().modulus_chain[a.level]);

    Ciphertext c;
    c.parts.push_back(ctx.rescale(k0));
    c.parts.push_back(ctx.rescale(k1));
    c.level = a.level - 1;
    c.scale = tensor_scale / dropped;
    c.slot_count_used = std::max(a.slot_count_used, b.slot_count_used);
    c.msg_bound = a.msg_bound * b.msg_bound;
    c.noise_bound = a.msg_bound * b.noise_bound + b.msg_bound * a.noise_bound +
                    a.noise_bound * b.noise_bound +
                    ctx.keyswitch_noise_coeff(a.level) / tensor_scale +
                    ctx.rescale_noise_coeff() / c.scale;
    return c;
}

Ciphertext rotate(const Context& ctx, const Ciphertext& ct, std::size_t steps,
                  const EvalKeys& keys) {
    const std::size_t slots = ctx.slot_count();
    steps %= slots;
    Ciphertext cur = ct;
    std::size_t bit = 1;
    while (steps) {
        if (steps & 1) {
            const auto it = keys.galois.find(static_cast<std::uint32_t>(bit));
            if (it == keys.galois.end())
                fail(ErrorCode::MissingGaloisKey,
                     "no galois key for step " + std::to_string(bit));
            const std::uint64_t g = ctx.galois_element(bit);
            const RnsPoly r0 = ctx.automorphism(cur.parts[0], g);
            const RnsPoly r1 = ctx.automorphism(cur.parts[1], g);
            auto [k0, k1] = apply_keyswitch(ctx, r1, it->second);
            ctx.add_inplace(k0, r0);
            cur.parts[0] = std::move(k0);
            cur.parts[1] = std::move(k1);
            cur.noise_bound += ctx.keyswitch_noise_coeff(cur.level) / cur.scale;
            cur.slot_count_used = static_cast<std::uint32_t>(slots);
        }
        steps >>= 1;
        bit <<= 1;
    }
    return cur;
}

Ciphertext rotate_and_sum(const Context& ctx, const Ciphertext& ct,
                          std::size_t k, const EvalKeys& keys) {
    if (k == 0 || k > ctx.slot_count() || (k & (k - 1)) != 0)
        fail(ErrorCode::InvalidParams,
             "rotate_and_sum requires power-of-two k <= N/2");
    Ciphertext acc = ct;
    for (std::size_t step = k / 2; step >= 1; step /= 2) {
        acc = he_add(ctx, acc, rotate(ctx, acc, step, keys));
        if (step == 1) break;
    }
    return acc;
}

}  // namespace tip::ckks
