// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_CKKS_SERIALIZE_HPP
#define TIP_CKKS_SERIALIZE_HPP

#include <cstdint>
#include <vector>

#include "tip/ckks/evaluator.hpp"
#include "tip/ckks/keys.hpp"

namespace tip::ckks {

inline constexpr std::uint16_t kWireVersion = 1;

/// Ciphertext wire format (little-endian):
///   "TIPC" | version u16 | params_hash 32B | level u8 | num_parts u8 |
///   scale_log2 f64 | slot_count_used u32 |
///   per part: coeff count u32, then RNS residues as u64 arrays by prime.
std::vector<std::uint8_t> serialize_ciphertext(const Context& ctx,
                                               const Ciphertext& ct);
Ciphertext deserialize_ciphertext(const std::vector<std::uint8_t>& bytes,
                                  const Context& ctx);

/// Key material files share the layout with magic "TIPK" and a component
/// tag: 1 = public key, 2 = secret key, 3 = evaluation keys.
std::vector<std::uint8_t> serialize_public_key(const Context& ctx,
                                               const PublicKey& pk);
PublicKey deserialize_public_key(const std::vector<std::uint8_t>& bytes,
                                 const Context& ctx);

std::vector<std::uint8_t> serialize_secret_key(
    const Context& ctx, const std::vector<std::int8_t>& sk);
std::vector<std::int8_t> deserialize_secret_key(
    const std::vector<std::uint8_t>& bytes, const Context& ctx);

std::vector<std::uint8_t> serialize_eval_keys(const Context& ctx,
                                              const EvalKeys& keys);
EvalKeys deserialize_eval_keys(const std::vector<std::uint8_t>& bytes,
                               const Context& ctx);

}  // namespace tip::ckks

#endif  // TIP_CKKS_SERIALIZE_HPP
