// SPDX-License-Identifier: Apache-2.0

#include "tip/ckks/ntt.hpp"

#include "tip/common/error.hpp"

namespace tip::ckks {

std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp, std::uint64_t q) {
    std::uint64_t r = 1 % q;
    base %= q;
    while (exp) {
        if (exp & 1) r = mul_mod(r, base, q);
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    return r;
}

std::uint64_t inv_mod(std::uint64_t a, std::uint64_t q) {
    // q prime
    return pow_mod(a, q - 2, q);
}

bool is_prime_u64(std::uint64_t n) {
    if (n < 2) return false;
    for (std::uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL})
        if (n % p == 0) return n == p;
    std::uint64_t d = n - 1;
    int r = 0;
    while ((d & 1) == 0) { d >>= 1; ++r; }
    // deterministic Miller-Rabin bases for 64-bit integers
    for (std::uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL,
                            23ULL, 29ULL, 31ULL, 37ULL}) {
        if (a % n == 0) continue;
        std::uint64_t x = pow_mod(a, d, n);
        if (x == 1 || x == n - 1) continue;
        bool composite = true;
        for (int i = 0; i < r - 1; ++i) {
            x = mul_mod(x, x, n);
            if (x == n - 1) { composite = false; break; }
        }
        if (composite) return false;
    }
    return true;
}

namespace {

std::size_t bitrev(std::size_t x, int bits) {
    std::size_t r = 0;
    for (int i = 0; i < bits; ++i) {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    return r;
}

/// Smallest primitive 2N-th root of unity mod q.
std::uint64_t find_psi(std::uint64_t q, std::size_t n) {
    const std::uint64_t order = 2 * static_cast<std::uint64_t>(n);
    for (std::uint64_t cand = 2;; ++cand) {
        std::uint64_t c = pow_mod(cand, (q - 1) / order, q);
        if (pow_mod(c, order / 2, q) == q - 1) return c;
        if (cand > 1000)
            fail(ErrorCode::InvalidParams, "no 2N-th root of unity found");
    }
}

}  // namespace

NttTable::NttTable(std::uint64_t prime, std::size_t degree)
    : q_(prime), n_(degree) {
    if ((q_ - 1) % (2 * n_) != 0)
        fail(ErrorCode::InvalidParams, "modulus not NTT-friendly");
    int bits = 0;
    while ((std::size_t{1} << bits) < n_) ++bits;

    const std::uint64_t psi = find_psi(q_, n_);
    const std::uint64_t psi_inv = inv_mod(psi, q_);
    root_pow_.resize(n_);
    root_pow_inv_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        root_pow_[i] = pow_mod(psi, bitrev(i, bits), q_);
        root_pow_inv_[i] = pow_mod(psi_inv, bitrev(i, bits), q_);
    }
    n_inv_ = inv_mod(static_cast<std::uint64_t>(n_), q_);
}

void NttTable::forward(std::vector<std::uint64_t>& a) const {
    std::size_t t = n_;
    for (std::size_t m = 1; m < n_; m <<= 1) {
        t >>= 1;
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j1 = 2 * i * t;
            const std::uint64_t s = root_pow_[m + i];
            for (std::size_t j = j1; j < j1 + t; ++j) {
                const std::uint64_t u = a[j];
                const std::uint64_t v = mul_mod(a[j + t], s, q_);
                a[j] = add_mod(u, v, q_);
                a[j + t] = sub_mod(u, v, q_);
            }
        }
    }
}

void NttTable::inverse(std::vector<std::uint64_t>& a) const {
    std::size_t t = 1;
    for (std::size_t m = n_; m > 1; m >>= 1) {
        std::size_t j1 = 0;
        const std::size_t h = m >> 1;
        for (std::size_t i = 0; i < h; ++i) {
            const std::uint64_t s = root_pow_inv_[h + i];
            for (std::size_t j = j1; j < j1 + t; ++j) {
                const std::uint64_t u = a[j];
                const std::uint64_t v = a[j + t];
                a[j] = add_mod(u, v, q_);
                a[j + t] = mul_mod(sub_mod(u, v, q_), s, q_);
            }
            j1 += 2 * t;
        }
        t <<= 1;
    }
    for (auto& x : a) x = mul_mod(x, n_inv_, q_);
}

std::vector<std::uint64_t> NttTable::multiply(
    const std::vector<std::uint64_t>& a,
    const std::vector<std::uint64_t>& b) const {
    std::vector<std::uint64_t> fa = a, fb = b;
    forward(fa);
    forward(fb);
    for (std::size_t i = 0; i < n_; ++i) fa[i] = mul_mod(fa[i], fb[i], q_);
    inverse(fa);
    return fa;
}

std::vector<std::uint64_t> NttTable::multiply_schoolbook(
    const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b,
    std::uint64_t q) {
    const std::size_t n = a.size();
    std::vector<std::uint64_t> c(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] == 0) continue;
        for (std::size_t j = 0; j < n; ++j) {
            const std::uint64_t p = mul_mod(a[i], b[j], q);
            const std::size_t k = i + j;
            if (k < n)
                c[k] = add_mod(c[k], p, q);
            else
                c[k - n] = sub_mod(c[k - n], p, q);  // X^N = -1
        }
    }
    return c;
}

}  // namespace tip::ckks
