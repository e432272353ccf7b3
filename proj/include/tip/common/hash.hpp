// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_COMMON_HASH_HPP
#define TIP_COMMON_HASH_HPP

#include <array>
#include <cstdint>
#include <vector>

namespace tip {

std::array<std::uint8_t, 32> sha256(const std::uint8_t* data, std::size_t n);
std::array<std::uint8_t, 32> sha256(const std::vector<std::uint8_t>& data);

}  // namespace tip

#endif  // TIP_COMMON_HASH_HPP
