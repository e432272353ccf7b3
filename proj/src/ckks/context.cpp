// SPDX-License-Identifier: Apache-2.0

#include "tip/ckks/context.hpp"

#include <algorithm>
#include <cmath>

#include "tip/common/error.hpp"

namespace tip::ckks {

namespace {
int bit_length(std::uint64_t x) {
    int b = 0;
    while (x) { ++b; x >>= 1; }
    return b;
}
}  // namespace

Context::Context(CkksParams params, bool schoolbook_mul)
    : params_(std::move(params)),
      n_(0),
      schoolbook_mul_(schoolbook_mul) {
    params_.validate();
    n_ = params_.ring_degree;
    hash_ = params_.hash();

    const auto& chain = params_.modulus_chain;
    for (auto q : chain) ntt_.push_back(std::make_unique<NttTable>(q, n_));

    const int w = params_.decomp_log_base;
    for (auto q : chain)
        digits_.push_back(static_cast<std::size_t>((bit_length(q) + w - 1) / w));

    // Gadget constants per level: entry (prime j, digit t) carries
    // 2^{w t} * (Q_l / q_j) * [(Q_l / q_j)^{-1}]_{q_j}, reduced mod each
    // active prime.
    const int levels = static_cast<int>(chain.size());
    gadget_.resize(levels);
    gadget_index_.resize(levels);
    for (int l = 0; l < levels; ++l) {
        for (int j = 0; j <= l; ++j) {
            // qhat_j mod q_i for all active i
            std::vector<std::uint64_t> qhat(l + 1);
            for (int i = 0; i <= l; ++i) {
                std::uint64_t acc = 1 % chain[i];
                for (int m = 0; m <= l; ++m)
                    if (m != j) acc = mul_mod(acc, chain[m] % chain[i], chain[i]);
                qhat[i] = acc;
            }
            const std::uint64_t qhat_inv = inv_mod(qhat[j], chain[j]);
            for (std::size_t t = 0; t < digits_[j]; ++t) {
                std::vector<std::uint64_t> row(l + 1);
                for (int i = 0; i <= l; ++i) {
                    std::uint64_t c = pow_mod(2, static_cast<std::uint64_t>(w) * t,
                                              chain[i]);
                    c = mul_mod(c, qhat[i], chain[i]);
                    c = mul_mod(c, qhat_inv % chain[i], chain[i]);
                    row[i] = c;
                }
                gadget_[l].push_back(std::move(row));
                gadget_index_[l].emplace_back(j, static_cast<int>(t));
            }
        }
    }

    // slot j <-> odd exponent 5^j mod 2N
    const std::size_t two_n = 2 * n_;
    slot_to_exponent_.resize(n_ / 2);
    std::size_t e = 1;
    for (std::size_t j = 0; j < n_ / 2; ++j) {
        slot_to_exponent_[j] = e;
        e = (e * 5) % two_n;
    }

    fft_roots_.resize(two_n);
    for (std::size_t k = 0; k < two_n; ++k) {
        const double ang = 2.0 * M_PI * static_cast<double>(k) /
                           static_cast<double>(two_n);
        fft_roots_[k] = {std::cos(ang), std::sin(ang)};
    }
    int bits = 0;
    while ((std::size_t{1} << bits) < two_n) ++bits;
    bitrev_.resize(two_n);
    for (std::size_t i = 0; i < two_n; ++i) {
        std::size_t r = 0, x = i;
        for (int b = 0; b < bits; ++b) { r = (r << 1) | (x & 1); x >>= 1; }
        bitrev_[i] = r;
    }
}

void Context::check_compatible(const RnsPoly& a, const RnsPoly& b) const {
    if (a.residues.size() != b.residues.size())
        fail(ErrorCode::LevelMismatch, "RNS level mismatch");
}

RnsPoly Context::zero(int level) const {
    RnsPoly p;
    p.residues.assign(level + 1, std::vector<std::uint64_t>(n_, 0));
    return p;
}

RnsPoly Context::add(const RnsPoly& a, const RnsPoly& b) const {
    check_compatible(a, b);
    RnsPoly c = a;
    add_inplace(c, b);
    return c;
}

void Context::add_inplace(RnsPoly& a, const RnsPoly& b) const {
    check_compatible(a, b);
    for (std::size_t j = 0; j < a.residues.size(); ++j) {
        const std::uint64_t q = params_.modulus_chain[j];
        for (std::size_t i = 0; i < n_; ++i)
            a.residues[j][i] = add_mod(a.residues[j][i], b.residues[j][i], q);
    }
}

RnsPoly Context::sub(const RnsPoly& a, const RnsPoly& b) const {
    check_compatible(a, b);
    RnsPoly c = a;
    for (std::size_t j = 0; j < c.residues.size(); ++j) {
        const std::uint64_t q = params_.modulus_chain[j];
        for (std::size_t i = 0; i < n_; ++i)
            c.residues[j][i] = sub_mod(c.residues[j][i], b.residues[j][i], q);
    }
    return c;
}

RnsPoly Context::negate(const RnsPoly& a) const {
    RnsPoly c = a;
    for (std::size_t j = 0; j < c.residues.size(); ++j) {
        const std::uint64_t q = params_.modulus_chain[j];
        for (std::size_t i = 0; i < n_; ++i)
            c.residues[j][i] = c.residues[j][i] == 0 ? 0 : q - c.residues[j][i];
    }
    return c;
}

RnsPoly Context::multiply(const RnsPoly& a, const RnsPoly& b) const {
    check_compatible(a, b);
    RnsPoly c;
    c.residues.resize(a.residues.size());
    for (std::size_t j = 0; j < a.residues.size(); ++j) {
        if (schoolbook_mul_)
            c.residues[j] = NttTable::multiply_schoolbook(
                a.residues[j], b.residues[j], params_.modulus_chain[j]);
        else
            c.residues[j] = ntt_[j]->multiply(a.residues[j], b.residues[j]);
    }
    return c;
}

RnsPoly Context::rescale(const RnsPoly& a) const {
    const int l = a.level();
    if (l < 1) fail(ErrorCode::DepthExhausted, "no prime left to drop");
    const std::uint64_t qt = params_.modulus_chain[l];
    const std::uint64_t half = qt / 2;
    RnsPoly c;
    c.residues.resize(l);
    for (int j = 0; j < l; ++j) {
        const std::uint64_t q = params_.modulus_chain[j];
        const std::uint64_t qt_inv = inv_mod(qt % q, q);
        c.residues[j].resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const std::uint64_t r = a.residues[l][i];
            // centered remainder of r mod qt, reduced mod q
            std::uint64_t r_mod_q;
            if (r > half)
                r_mod_q = sub_mod(0, (qt - r) % q, q);
            else
                r_mod_q = r % q;
            const std::uint64_t diff = sub_mod(a.residues[j][i], r_mod_q, q);
            c.residues[j][i] = mul_mod(diff, qt_inv, q);
        }
    }
    return c;
}

RnsPoly Context::automorphism(const RnsPoly& a, std::uint64_t galois_elt) const {
    const std::size_t two_n = 2 * n_;
    RnsPoly c = zero(a.level());
    for (std::size_t j = 0; j < a.residues.size(); ++j) {
        const std::uint64_t q = params_.modulus_chain[j];
        for (std::size_t i = 0; i < n_; ++i) {
            const std::uint64_t v = a.residues[j][i];
            const std::size_t idx = (i * galois_elt) % two_n;
            if (idx < n_)
                c.residues[j][idx] = v;
            else
                c.residues[j][idx - n_] = v == 0 ? 0 : q - v;
        }
    }
    return c;
}

std::uint64_t Context::galois_element(std::size_t steps) const {
    const std::size_t two_n = 2 * n_;
    std::uint64_t g = 1;
    for (std::size_t i = 0; i < steps; ++i) g = (g * 5) % two_n;
    return g;
}

RnsPoly Context::from_signed(const std::vector<std::int64_t>& coeffs,
                             int level) const {
    RnsPoly p = zero(level);
    for (int j = 0; j <= level; ++j) {
        const std::uint64_t q = params_.modulus_chain[j];
        for (std::size_t i = 0; i < n_; ++i) {
            const std::int64_t v = coeffs[i];
            p.residues[j][i] =
                v >= 0 ? static_cast<std::uint64_t>(v) % q
                       : q - (static_cast<std::uint64_t>(-v) % q);
        }
    }
    return p;
}

RnsPoly Context::mod_down(const RnsPoly& a, int level) const {
    if (a.level() < level) fail(ErrorCode::LevelMismatch, "cannot mod up");
    RnsPoly c;
    c.residues.assign(a.residues.begin(), a.residues.begin() + level + 1);
    return c;
}

std::vector<std::int64_t> Context::sample_ternary(Rng& rng) const {
    std::vector<std::int64_t> s(n_, 0);
    // Hamming weight N/2: permute indices, sign the first half
    std::vector<std::size_t> idx(n_);
    for (std::size_t i = 0; i < n_; ++i) idx[i] = i;
    for (std::size_t i = n_ - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> d(0, i);
        std::swap(idx[i], idx[d(rng)]);
    }
    std::uniform_int_distribution<int> sign(0, 1);
    for (std::size_t i = 0; i < n_ / 2; ++i) s[idx[i]] = sign(rng) ? 1 : -1;
    return s;
}

std::vector<std::int64_t> Context::sample_error(Rng& rng) const {
    // centered binomial with variance k/2 ~= sigma^2
    const int k = std::max(1, static_cast<int>(std::lround(
                                   2.0 * params_.noise_stddev *
                                   params_.noise_stddev)));
    std::vector<std::int64_t> e(n_);
    std::uniform_int_distribution<std::uint64_t> bits;
    for (std::size_t i = 0; i < n_; ++i) {
        int acc = 0;
        int remaining = k;
        while (remaining > 0) {
            const int take = std::min(remaining, 32);
            std::uint64_t r = bits(rng);
            for (int b = 0; b < take; ++b) {
                acc += static_cast<int>(r & 1) - static_cast<int>((r >> 1) & 1);
                r >>= 2;
            }
            remaining -= take;
        }
        e[i] = acc;
    }
    return e;
}

RnsPoly Context::sample_uniform(Rng& rng, int level) const {
    RnsPoly p = zero(level);
    for (int j = 0; j <= level; ++j) {
        std::uniform_int_distribution<std::uint64_t> d(
            0, params_.modulus_chain[j] - 1);
        for (std::size_t i = 0; i < n_; ++i) p.residues[j][i] = d(rng);
    }
    return p;
}

std::size_t Context::gadget_size(int level) const {
    return gadget_[level].size();
}

std::uint64_t Context::gadget_constant(int level, std::size_t g, int i) const {
    return gadget_[level][g][i];
}

std::vector<std::vector<std::uint64_t>> Context::gadget_decompose(
    const RnsPoly& a) const {
    const int l = a.level();
    const int w = params_.decomp_log_base;
    const std::uint64_t mask = (w == 64) ? ~0ULL : ((1ULL << w) - 1);
    std::vector<std::vector<std::uint64_t>> out;
    out.reserve(gadget_[l].size());
    for (const auto& [j, t] : gadget_index_[l]) {
        std::vector<std::uint64_t> digit(n_);
        const auto& res = a.residues[j];
        const int shift = w * t;
        for (std::size_t i = 0; i < n_; ++i)
            digit[i] = (res[i] >> shift) & mask;
        out.push_back(std::move(digit));
    }
    return out;
}

void Context::fft(std::vector<std::complex<double>>& a, bool invert) const {
    const std::size_t m = a.size();  // == 2N
    for (std::size_t i = 0; i < m; ++i)
        if (bitrev_[i] > i) std::swap(a[i], a[bitrev_[i]]);
    for (std::size_t len = 2; len <= m; len <<= 1) {
        const std::size_t stride = m / len;
        for (std::size_t i = 0; i < m; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> w = fft_roots_[k * stride];
                if (invert) w = std::conj(w);
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

std::vector<double> Context::embed_forward(
    const std::vector<double>& coeffs) const {
    const std::size_t two_n = 2 * n_;
    std::vector<std::complex<double>> a(two_n, {0.0, 0.0});
    for (std::size_t i = 0; i < n_; ++i) a[i] = {coeffs[i], 0.0};
    fft(a, /*invert=*/false);  // F[e] = sum_i c_i * zeta^{i e}
    std::vector<double> slots(n_ / 2);
    for (std::size_t j = 0; j < n_ / 2; ++j)
        slots[j] = a[slot_to_exponent_[j]].real();
    return slots;
}

std::vector<double> Context::embed_inverse(
    const std::vector<double>& slots) const {
    const std::size_t two_n = 2 * n_;
    std::vector<std::complex<double>> f(two_n, {0.0, 0.0});
    for (std::size_t j = 0; j < n_ / 2; ++j) {
        const std::size_t e = slot_to_exponent_[j];
        f[e] = {slots[j], 0.0};
        f[two_n - e] = {slots[j], 0.0};  // conjugate pair, values are real
    }
    fft(f, /*invert=*/true);
    std::vector<double> coeffs(n_);
    const double inv = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) coeffs[i] = f[i].real() * inv;
    return coeffs;
}

double Context::fresh_noise_bound() const {
    const double nn = static_cast<double>(n_);
    const double sigma = params_.noise_stddev;
    // e0 + e1*s - e*u with ternary s,u of weight N/2; slot-domain std is
    // ~ sigma * N; factor 16 gives a comfortably safe upper estimate
    const double coeff_std = sigma * std::sqrt(1.0 + nn);
    const double slot = 16.0 * coeff_std * std::sqrt(nn);
    const double rounding = 16.0 * 0.5 * std::sqrt(nn);
    return (slot + rounding) / params_.scale();
}

double Context::keyswitch_noise_coeff(int level) const {
    const double nn = static_cast<double>(n_);
    const double d = static_cast<double>(gadget_size(level));
    const double base = std::exp2(params_.decomp_log_base);
    const double coeff_std =
        std::sqrt(d * nn / 12.0) * base * params_.noise_stddev;
    return 16.0 * coeff_std * std::sqrt(nn);  // caller divides by scale
}

double Context::rescale_noise_coeff() const {
    const double nn = static_cast<double>(n_);
    return 16.0 * 0.5 * std::sqrt(nn * (1.0 + nn / 2.0));
}

}  // namespace tip::ckks
