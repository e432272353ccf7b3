// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_CKKS_CONTEXT_HPP
#define TIP_CKKS_CONTEXT_HPP

#include <complex>
#include <cstdint>
#include <memory>
#include <vector>

#include "tip/common/rng.hpp"
#include "tip/ckks/ntt.hpp"
#include "tip/ckks/params.hpp"

namespace tip::ckks {

/// Polynomial in R_Q at some level, stored as RNS residues in coefficient
/// domain: residues[j][i] is coefficient i modulo modulus_chain[j].
/// Level = residues.size() - 1.
struct RnsPoly {
    std::vector<std::vector<std::uint64_t>> residues;

    int level() const { return static_cast<int>(residues.size()) - 1; }
    bool empty() const { return residues.empty(); }
};

/// Precomputed tables shared by every operation: NTT roots per prime, CRT
/// recomposition constants, key-switching gadget constants per level, and
/// the complex FFT roots used by the canonical embedding.
///
/// Immutable after construction; safe to share across threads.
class Context {
public:
    explicit Context(CkksParams params, bool schoolbook_mul = false);

    const CkksParams& params() const { return params_; }
    std::size_t degree() const { return n_; }
    std::size_t slot_count() const { return n_ / 2; }
    int max_level() const { return static_cast<int>(ntt_.size()) - 1; }
    const NttTable& ntt(int prime_index) const { return *ntt_[prime_index]; }
    const std::array<std::uint8_t, 32>& params_hash() const { return hash_; }

    // --- RNS polynomial arithmetic (coefficient domain in/out) ---
    RnsPoly zero(int level) const;
    RnsPoly add(const RnsPoly& a, const RnsPoly& b) const;
    RnsPoly sub(const RnsPoly& a, const RnsPoly& b) const;
    RnsPoly negate(const RnsPoly& a) const;
    RnsPoly multiply(const RnsPoly& a, const RnsPoly& b) const;
    void add_inplace(RnsPoly& a, const RnsPoly& b) const;

    /// Drop the top prime: divide by q_top with rounding. `scale` is updated
    /// by the caller.
    RnsPoly rescale(const RnsPoly& a) const;

    /// a(X) -> a(X^galois_elt), galois_elt odd.
    RnsPoly automorphism(const RnsPoly& a, std::uint64_t galois_elt) const;

    /// Galois element 5^steps mod 2N implementing a left slot rotation.
    std::uint64_t galois_element(std::size_t steps) const;

    /// Reduce a small signed polynomial into RNS form at `level`.
    RnsPoly from_signed(const std::vector<std::int64_t>& coeffs, int level) const;

    /// Drop residues above `level` (a must currently be at >= level).
    RnsPoly mod_down(const RnsPoly& a, int level) const;

    // --- samplers (all randomness via the supplied generator) ---
    std::vector<std::int64_t> sample_ternary(Rng& rng) const;        // HW N/2
    std::vector<std::int64_t> sample_error(Rng& rng) const;          // CBD
    RnsPoly sample_uniform(Rng& rng, int level) const;

    // --- key-switching gadget ---
    /// Gadget length (number of (prime, digit) pairs) at a level.
    std::size_t gadget_size(int level) const;
    /// Gadget constant for entry g at level, reduced mod modulus_chain[i].
    std::uint64_t gadget_constant(int level, std::size_t g, int i) const;
    /// Decompose `a` into gadget digits: out[g] is a small-coefficient
    /// polynomial (plain uint64 coefficients < 2^w).
    std::vector<std::vector<std::uint64_t>> gadget_decompose(
        const RnsPoly& a) const;
    std::size_t digits_for_prime(int prime_index) const {
        return digits_[prime_index];
    }

    // --- canonical embedding (complex FFT over 2N points) ---
    /// Evaluate slot values (length N/2) from centered coefficients given as
    /// doubles. Used by decode after CRT lifting.
    std::vector<double> embed_forward(const std::vector<double>& coeffs) const;
    /// Inverse embedding: slot values -> real polynomial coefficients.
    std::vector<double> embed_inverse(const std::vector<double>& slots) const;

    bool schoolbook_mul() const { return schoolbook_mul_; }

    // noise-model helpers (slot-domain bounds, deliberately conservative)
    double fresh_noise_bound() const;
    double keyswitch_noise_coeff(int level) const;
    double rescale_noise_coeff() const;

private:
    void check_compatible(const RnsPoly& a, const RnsPoly& b) const;
    void fft(std::vector<std::complex<double>>& a, bool invert) const;

    CkksParams params_;
    std::size_t n_;
    bool schoolbook_mul_;
    std::array<std::uint8_t, 32> hash_;
    std::vector<std::unique_ptr<NttTable>> ntt_;
    std::vector<std::size_t> digits_;  // digits per prime at width w

    // gadget_[level][g][i]: constant mod q_i; g enumerates (prime j, digit t)
    std::vector<std::vector<std::vector<std::uint64_t>>> gadget_;
    // map gadget index -> (prime j, digit t) per level
    std::vector<std::vector<std::pair<int, int>>> gadget_index_;

    std::vector<std::size_t> slot_to_exponent_;  // 5^j mod 2N
    std::vector<std::complex<double>> fft_roots_;  // e^{2*pi*i*k/(2N)}
    std::vector<std::size_t> bitrev_;              // for size 2N
};

}  // namespace tip::ckks

#endif  // TIP_CKKS_CONTEXT_HPP
