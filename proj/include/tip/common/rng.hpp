// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_COMMON_RNG_HPP
#define TIP_COMMON_RNG_HPP

#include <cstdint>
#include <random>

namespace tip {

/// splitmix64 mixing step; used to derive independent sub-seeds from a
/// master seed plus domain tags so that all randomness flows from one seed.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
    return mix64(mix64(master) ^ mix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag1,
                                 std::uint64_t tag2) {
    return derive_seed(derive_seed(master, tag1), tag2);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

}  // namespace tip

#endif  // TIP_COMMON_RNG_HPP
