// SPDX-License-Identifier: Apache-2.0

#include "tip/ckks/keys.hpp"

#include "tip/common/error.hpp"

namespace tip::ckks {

namespace {

/// KSK entries are stored with residues already in NTT domain so that
/// apply_keyswitch only transforms the decomposed digits.
void to_ntt(const Context& ctx, RnsPoly& p) {
    for (int i = 0; i <= p.level(); ++i) ctx.ntt(i).forward(p.residues[i]);
}

KeySwitchKey make_ksk(const Context& ctx, Rng& rng,
                      const std::vector<std::int8_t>& sk,
                      const RnsPoly& target_full) {
    KeySwitchKey out;
    const int max_level = ctx.max_level();
    out.by_level.resize(max_level + 1);
    for (int l = 0; l <= max_level; ++l) {
        const RnsPoly s_l = secret_poly(ctx, sk, l);
        const RnsPoly t_l = ctx.mod_down(target_full, l);
        const std::size_t g_count = ctx.gadget_size(l);
        for (std::size_t g = 0; g < g_count; ++g) {
            RnsPoly a = ctx.sample_uniform(rng, l);
            const RnsPoly e = ctx.from_signed(ctx.sample_error(rng), l);
            RnsPoly b = ctx.negate(ctx.add(ctx.multiply(a, s_l), e));
            // b += G_{l,g} * t
            for (int i = 0; i <= l; ++i) {
                const std::uint64_t q = ctx.params().modulus_chain[i];
                const std::uint64_t c = ctx.gadget_constant(l, g, i);
                for (std::size_t x = 0; x < ctx.degree(); ++x)
                    b.residues[i][x] = add_mod(
                        b.residues[i][x],
                        mul_mod(c, t_l.residues[i][x], q), q);
            }
            to_ntt(ctx, b);
            to_ntt(ctx, a);
            out.by_level[l].emplace_back(std::move(b), std::move(a));
        }
    }
    return out;
}

}  // namespace

RnsPoly secret_poly(const Context& ctx, const std::vector<std::int8_t>& sk,
                    int level) {
    std::vector<std::int64_t> coeffs(sk.begin(), sk.end());
    return ctx.from_signed(coeffs, level);
}

KeySet keygen(const Context& ctx, std::uint64_t seed) {
    Rng rng = make_rng(derive_seed(seed, 0x6b657967656eULL));  // "keygen"
    const int top = ctx.max_level();

    KeySet ks;
    const std::vector<std::int64_t> s = ctx.sample_ternary(rng);
    ks.secret_key.assign(s.begin(), s.end());
    const RnsPoly s_poly = ctx.from_signed(s, top);

    // public key: (b, a) with b = -(a*s + e)
    ks.public_key.a = ctx.sample_uniform(rng, top);
    const RnsPoly e = ctx.from_signed(ctx.sample_error(rng), top);
    ks.public_key.b =
        ctx.negate(ctx.add(ctx.multiply(ks.public_key.a, s_poly), e));

    // relinearization key for s^2
    const RnsPoly s_sq = ctx.multiply(s_poly, s_poly);
    ks.eval_keys.relin = make_ksk(ctx, rng, ks.secret_key, s_sq);

    // galois keys for every power-of-two left rotation 1 .. N/4
    for (std::size_t step = 1; step <= ctx.degree() / 4; step <<= 1) {
        const std::uint64_t g = ctx.galois_element(step);
        const RnsPoly s_rot = ctx.automorphism(s_poly, g);
        ks.eval_keys.galois.emplace(
            static_cast<std::uint32_t>(step),
            make_ksk(ctx, rng, ks.secret_key, s_rot));
    }
    return ks;
}

std::pair<RnsPoly, RnsPoly> apply_keyswitch(const Context& ctx,
                                            const RnsPoly& d,
                                            const KeySwitchKey& ksk) {
    const int l = d.level();
    if (l >= static_cast<int>(ksk.by_level.size()) || ksk.by_level[l].empty())
        fail(ErrorCode::LevelMismatch, "key-switch key missing for level");
    const auto digits = ctx.gadget_decompose(d);
    const std::size_t n = ctx.degree();

    // accumulate in NTT domain: one forward transform per digit per prime
    std::vector<std::vector<std::uint64_t>> acc0(l + 1), acc1(l + 1);
    for (int i = 0; i <= l; ++i) {
        acc0[i].assign(n, 0);
        acc1[i].assign(n, 0);
    }
    for (std::size_t g = 0; g < digits.size(); ++g) {
        const auto& [b_g, a_g] = ksk.by_level[l][g];
        for (int i = 0; i <= l; ++i) {
            const std::uint64_t q = ctx.params().modulus_chain[i];
            std::vector<std::uint64_t> fu = digits[g];
            ctx.ntt(i).forward(fu);
            const auto& bb = b_g.residues[i];
            const auto& aa = a_g.residues[i];
            auto& o0 = acc0[i];
            auto& o1 = acc1[i];
            for (std::size_t x = 0; x < n; ++x) {
                o0[x] = add_mod(o0[x], mul_mod(fu[x], bb[x], q), q);
                o1[x] = add_mod(o1[x], mul_mod(fu[x], aa[x], q), q);
            }
        }
    }
    RnsPoly c0, c1;
    c0.residues.resize(l + 1);
    c1.residues.resize(l + 1);
    for (int i = 0; i <= l; ++i) {
        ctx.ntt(i).inverse(acc0[i]);
        ctx.ntt(i).inverse(acc1[i]);
        c0.residues[i] = std::move(acc0[i]);
        c1.residues[i] = std::move(acc1[i]);
    }
    return {std::move(c0), std::move(c1)};
}

}  // namespace tip::ckks
