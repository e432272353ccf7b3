// SPDX-License-Identifier: Apache-2.0

#include "tip/ckks/params.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>
#include <json.hpp>

#include "tip/common/error.hpp"
#include "tip/ckks/ntt.hpp"

namespace tip::ckks {

double CkksParams::scale() const { return std::exp2(scale_log2); }

void CkksParams::validate() const {
    if (ring_degree < 1024 || (ring_degree & (ring_degree - 1)) != 0)
        fail(ErrorCode::InvalidParams, "ring_degree must be a power of two >= 1024");
    if (modulus_chain.size() < 2)
        fail(ErrorCode::InvalidParams, "modulus chain needs at least 2 primes");
    const std::uint64_t two_n = 2 * ring_degree;
    for (std::size_t i = 0; i < modulus_chain.size(); ++i) {
        const std::uint64_t q = modulus_chain[i];
        if (!is_prime_u64(q))
            fail(ErrorCode::InvalidParams, "modulus is not prime");
        if (q % two_n != 1)
            fail(ErrorCode::InvalidParams, "modulus not congruent 1 mod 2N");
        if (scale() > static_cast<double>(q) * 2.0)
            fail(ErrorCode::InvalidParams, "scale exceeds modulus");
        for (std::size_t j = i + 1; j < modulus_chain.size(); ++j)
            if (modulus_chain[j] == q)
                fail(ErrorCode::InvalidParams, "duplicate modulus in chain");
    }
    if (noise_stddev <= 0)
        fail(ErrorCode::InvalidParams, "noise_stddev must be positive");
    if (decomp_log_base < 1 || decomp_log_base > 32)
        fail(ErrorCode::InvalidParams, "decomp_log_base out of range");
}

std::array<std::uint8_t, 32> CkksParams::hash() const {
    const std::string canon = to_json_text();
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    EVP_Digest(canon.data(), canon.size(), out.data(), &len, EVP_sha256(),
               nullptr);
    return out;
}

CkksParams CkksParams::desk_scale() {
    CkksParams p;
    p.ring_degree = 8192;
    // base prime 60-bit, two 40-bit rescale primes (~= the encoding scale so
    // the post-multiplication scale stays near 2^40)
    p.modulus_chain = {1152921504606830593ULL, 1099511480321ULL,
                       1099510890497ULL};
    p.scale_log2 = 40.0;
    p.noise_stddev = 3.2;
    p.decomp_log_base = 8;
    p.security_label = SecurityLabel::DeskScale;
    return p;
}

CkksParams CkksParams::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidParams, std::string("params JSON parse: ") + e.what());
    }
    CkksParams p;
    try {
        p.ring_degree = j.at("ring_degree").get<std::uint64_t>();
        for (const auto& m : j.at("moduli"))
            p.modulus_chain.push_back(std::stoull(m.get<std::string>()));
        p.scale_log2 = j.at("scale_log2").get<double>();
        p.noise_stddev = j.at("sigma").get<double>();
        p.decomp_log_base = j.at("decomp_log_base").get<int>();
        const std::string label = j.at("security_label").get<std::string>();
        if (label == "DeskScale")
            p.security_label = SecurityLabel::DeskScale;
        else if (label == "Calibrated")
            p.security_label = SecurityLabel::Calibrated;
        else
            fail(ErrorCode::InvalidParams, "unknown security_label " + label);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidParams, std::string("params JSON field: ") + e.what());
    }
    p.validate();
    return p;
}

CkksParams CkksParams::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open params file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string CkksParams::to_json_text() const {
    nlohmann::json j;
    j["ring_degree"] = ring_degree;
    auto moduli = nlohmann::json::array();
    for (auto q : modulus_chain) moduli.push_back(std::to_string(q));
    j["moduli"] = moduli;
    j["scale_log2"] = scale_log2;
    j["sigma"] = noise_stddev;
    j["decomp_log_base"] = decomp_log_base;
    j["security_label"] =
        security_label == SecurityLabel::DeskScale ? "DeskScale" : "Calibrated";
    return j.dump();
}

bool operator==(const CkksParams& a, const CkksParams& b) {
    return a.ring_degree == b.ring_degree && a.modulus_chain == b.modulus_chain &&
           a.scale_log2 == b.scale_log2 && a.noise_stddev == b.noise_stddev &&
           a.decomp_log_base == b.decomp_log_base &&
           a.security_label == b.security_label;
}

}  // namespace tip::ckks
