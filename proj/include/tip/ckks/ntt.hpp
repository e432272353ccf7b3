// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_CKKS_NTT_HPP
#define TIP_CKKS_NTT_HPP

#include <cstdint>
#include <vector>

namespace tip::ckks {

inline std::uint64_t mul_mod(std::uint64_t a, std::uint64_t b, std::uint64_t q) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(a) * b) % q);
}

inline std::uint64_t add_mod(std::uint64_t a, std::uint64_t b, std::uint64_t q) {
    std::uint64_t s = a + b;
    return s >= q ? s - q : s;
}

inline std::uint64_t sub_mod(std::uint64_t a, std::uint64_t b, std::uint64_t q) {
    return a >= b ? a - b : a + q - b;
}

std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp, std::uint64_t q);
std::uint64_t inv_mod(std::uint64_t a, std::uint64_t q);
bool is_prime_u64(std::uint64_t n);

/// Negacyclic NTT over one prime q = 1 (mod 2N). Forward/inverse transforms
/// fold the psi twist into the butterfly tables (Longa-Naehrig layout), so a
/// full negacyclic product is forward, pointwise, inverse.
class NttTable {
public:
    NttTable(std::uint64_t prime, std::size_t degree);

    std::uint64_t prime() const { return q_; }
    std::size_t degree() const { return n_; }

    void forward(std::vector<std::uint64_t>& a) const;
    void inverse(std::vector<std::uint64_t>& a) const;

    /// c = a * b in Z_q[X]/(X^N+1) via NTT.
    std::vector<std::uint64_t> multiply(const std::vector<std::uint64_t>& a,
                                        const std::vector<std::uint64_t>& b) const;

    /// O(N^2) reference path, kept as an independent oracle for the NTT.
    static std::vector<std::uint64_t> multiply_schoolbook(
        const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b,
        std::uint64_t q);

private:
    std::uint64_t q_;
    std::size_t n_;
    std::uint64_t n_inv_;
    std::vector<std::uint64_t> root_pow_;      // psi^bitrev(i)
    std::vector<std::uint64_t> root_pow_inv_;  // psi^-bitrev(i)
};

}  // namespace tip::ckks

#endif  // TIP_CKKS_NTT_HPP
