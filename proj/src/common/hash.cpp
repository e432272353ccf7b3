// SPDX-License-Identifier: Apache-2.0

#include "tip/common/hash.hpp"

#include <openssl/evp.h>

namespace tip {

std::array<std::uint8_t, 32> sha256(const std::uint8_t* data, std::size_t n) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    EVP_Digest(data, n, out.data(), &len, EVP_sha256(), nullptr);
    return out;
}

std::array<std::uint8_t, 32> sha256(const std::vector<std::uint8_t>& data) {
    return sha256(data.data(), data.size());
}

}  // namespace tip
