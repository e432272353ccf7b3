// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_CKKS_KEYS_HPP
#define TIP_CKKS_KEYS_HPP

#include <cstdint>
#include <map>
#include <vector>

#include "tip/common/rng.hpp"
#include "tip/ckks/context.hpp"

namespace tip::ckks {

struct PublicKey {
    RnsPoly b;  // -(a*s + e)
    RnsPoly a;
};

/// Key-switching key for one fixed target polynomial t (s^2 for
/// relinearization, s(X^g) for rotations). Because the digit gadget depends
/// on the active modulus product, one gadget vector is kept per level.
/// by_level[l][g] = (b, a) with b = -(a*s + e) + G_{l,g} * t  (mod Q_l).
struct KeySwitchKey {
    std::vector<std::vector<std::pair<RnsPoly, RnsPoly>>> by_level;
};

/// Broker-side evaluation material: everything needed for blind scoring,
/// nothing that decrypts.
struct EvalKeys {
    KeySwitchKey relin;
    std::map<std::uint32_t, KeySwitchKey> galois;  // rotation step -> key

    bool has_rotation(std::uint32_t step) const {
        return galois.count(step) != 0;
    }
};

struct KeySet {
    PublicKey public_key;
    std::vector<std::int8_t> secret_key;  // ternary coefficients
    EvalKeys eval_keys;
};

/// Deterministic key generation: fixed (params, seed) reproduces the exact
/// same key material byte for byte. Generates galois keys for every
/// power-of-two step 1, 2, ..., N/4.
KeySet keygen(const Context& ctx, std::uint64_t seed);

/// Apply a key-switching key to `d` (in coefficient domain) at its level,
/// producing the (c0, c1) contribution decrypting to ~ d * t.
std::pair<RnsPoly, RnsPoly> apply_keyswitch(const Context& ctx,
                                            const RnsPoly& d,
                                            const KeySwitchKey& ksk);

/// Secret key as an RnsPoly at the given level.
RnsPoly secret_poly(const Context& ctx, const std::vector<std::int8_t>& sk,
                    int level);

}  // namespace tip::ckks

#endif  // TIP_CKKS_KEYS_HPP
