// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_CKKS_PARAMS_HPP
#define TIP_CKKS_PARAMS_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace tip::ckks {

enum class SecurityLabel {
    DeskScale,   ///< small, fast parameters; NOT production-secure
    Calibrated,  ///< parameters chosen against a lattice estimate (unused here)
};

/// Scheme parameters for the RLWE ring Z_q[X]/(X^N + 1).
///
/// The modulus chain is ordered base-first: q_0 survives to the last level,
/// rescaling drops primes from the top. Every prime must satisfy
/// q = 1 (mod 2N) so the negacyclic NTT exists.
struct CkksParams {
    std::uint64_t ring_degree = 0;            ///< N, power of two >= 1024
    std::vector<std::uint64_t> modulus_chain; ///< q_0 .. q_L
    double scale_log2 = 40.0;                 ///< log2 of encoding scale
    double noise_stddev = 3.2;                ///< sigma of the error sampler
    int decomp_log_base = 8;                  ///< w, key-switching digit width
    SecurityLabel security_label = SecurityLabel::DeskScale;

    std::size_t slot_count() const { return ring_degree / 2; }
    int max_level() const { return static_cast<int>(modulus_chain.size()) - 1; }
    double scale() const;

    /// Throws InvalidParams when any structural invariant is violated.
    void validate() const;

    /// SHA-256 over the canonical textual form; embedded in every wire frame.
    std::array<std::uint8_t, 32> hash() const;

    static CkksParams desk_scale();
    static CkksParams from_json_text(const std::string& text);
    static CkksParams from_json_file(const std::string& path);
    std::string to_json_text() const;
};

bool operator==(const CkksParams& a, const CkksParams& b);

}  // namespace tip::ckks

#endif  // TIP_CKKS_PARAMS_HPP
