// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_CKKS_EVALUATOR_HPP
#define TIP_CKKS_EVALUATOR_HPP

#include <cstdint>
#include <vector>

#include "tip/common/rng.hpp"
#include "tip/ckks/context.hpp"
#include "tip/ckks/keys.hpp"

namespace tip::ckks {

struct Plaintext {
    RnsPoly poly;
    double scale = 0.0;
    int level = 0;
    std::uint32_t slot_count_used = 0;
    double msg_bound = 0.0;  ///< max |slot value|, feeds noise tracking
};

/// Two (or three, between tensoring and relinearization) ring elements plus
/// the metadata needed to interpret a decryption. noise_bound is a tracked
/// upper estimate of the slot-domain error; msg_bound tracks max |slot|.
struct Ciphertext {
    std::vector<RnsPoly> parts;
    double scale = 0.0;
    int level = 0;
    std::uint32_t slot_count_used = 0;
    double noise_bound = 0.0;
    double msg_bound = 0.0;
};

/// Encode reals into a plaintext at the params' scale. Values are placed in
/// the first `values.size()` slots; remaining slots are zero. The effective
/// slot_count_used is padded up to the next power of two so that
/// rotate_and_sum's log-depth tree is always valid.
Plaintext encode(const Context& ctx, const std::vector<double>& values,
                 int level);
/// Returns the first slot_count_used slot values.
std::vector<double> decode(const Context& ctx, const Plaintext& pt);
/// Returns all N/2 slots (rotation tests need the full cyclic vector).
std::vector<double> decode_all(const Context& ctx, const Plaintext& pt);

Ciphertext encrypt(const Context& ctx, const PublicKey& pk, const Plaintext& pt,
                   Rng& rng);
Plaintext decrypt(const Context& ctx, const std::vector<std::int8_t>& sk,
                  const Ciphertext& ct);

/// Convenience: decrypt + decode.
std::vector<double> decrypt_values(const Context& ctx,
                                   const std::vector<std::int8_t>& sk,
                                   const Ciphertext& ct);

Ciphertext he_add(const Context& ctx, const Ciphertext& a, const Ciphertext& b);

/// Tensor, relinearize, rescale once. Output level = input level - 1,
/// output scale = scale^2 / dropped prime.
Ciphertext he_mul(const Context& ctx, const Ciphertext& a, const Ciphertext& b,
                  const EvalKeys& keys);

/// Cyclic left rotation of the slot vector by `steps` (mod N/2), composed
/// from the power-of-two galois keys.
Ciphertext rotate(const Context& ctx, const Ciphertext& ct, std::size_t steps,
                  const EvalKeys& keys);

/// Slot 0 of the result holds the sum of the first k slots (k a power of
/// two, zero-padded upstream). ceil(log2 k) rotations and additions.
Ciphertext rotate_and_sum(const Context& ctx, const Ciphertext& ct,
                          std::size_t k, const EvalKeys& keys);

}  // namespace tip::ckks

#endif  // TIP_CKKS_EVALUATOR_HPP
