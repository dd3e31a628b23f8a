#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace stegakit {

// Deterministic random material, reproducible bit-for-bit across machines.
//
// Generator: Philox4x32-10 (Salmon et al., counter-based). One call maps a
// 128-bit counter and a 64-bit key to 128 bits of output; there is no hidden
// state, so any index of the stream can be computed directly and concurrent
// readers are safe by construction.
//
// Real-valued outputs avoid libm transcendentals (their rounding differs
// across platforms): uniforms come from the integer lanes, normals from a
// rational inverse-CDF approximation (Acklam) whose only non-arithmetic
// operations are IEEE sqrt and a fixed-order polynomial ln(x). Every
// operation is an exactly-rounded IEEE-754 primitive evaluated in a fixed
// order, which makes the byte output a pure function of (key, counter).

struct PhiloxKey {
    uint32_t k0 = 0;
    uint32_t k1 = 0;
    // Extra seed material mixed into the counter's high lanes.
    uint32_t c2 = 0;
    uint32_t c3 = 0;
};

inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr, uint32_t k0, uint32_t k1) {
    constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        uint64_t p0 = static_cast<uint64_t>(M0) * ctr[0];
        uint64_t p1 = static_cast<uint64_t>(M1) * ctr[2];
        ctr = {static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
               static_cast<uint32_t>(p1),
               static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
               static_cast<uint32_t>(p0)};
        k0 += W0;
        k1 += W1;
    }
    return ctr;
}

// Random-access view of the Philox stream under a fixed key: word(i) is the
// i-th 32-bit output, a pure function of (key, i).
class PhiloxStream {
public:
    explicit PhiloxStream(const PhiloxKey& key) : key_(key) {}

    uint32_t word(uint64_t index) const {
        uint64_t block = index / 4;
        unsigned lane = static_cast<unsigned>(index % 4);
        auto out = philox4x32({static_cast<uint32_t>(block), static_cast<uint32_t>(block >> 32),
                               key_.c2, key_.c3},
                              key_.k0, key_.k1);
        return out[lane];
    }

    // Uniform double in (0,1): (w + 0.5) * 2^-32.
    double uniform01(uint64_t index) const {
        return (static_cast<double>(word(index)) + 0.5) * 0x1p-32;
    }

private:
    PhiloxKey key_;
};

// Sequential consumer over a PhiloxStream, used where draws are inherently
// ordered (shuffles, rejection sampling).
class PhiloxSequence {
public:
    explicit PhiloxSequence(const PhiloxKey& key) : stream_(key) {}

    uint32_t next() { return stream_.word(pos_++); }

    // Unbiased integer in [0, bound) by rejection.
    uint32_t next_below(uint32_t bound) {
        if (bound == 0) throw std::invalid_argument("next_below: bound must be positive");
        uint64_t limit = (0x100000000ull / bound) * bound;
        for (;;) {
            uint32_t r = next();
            if (r < limit) return r % bound;
        }
    }

private:
    PhiloxStream stream_;
    uint64_t pos_ = 0;
};

namespace detail {

// ln(x) for x in (0, inf), computed only with exactly-rounded IEEE ops in a
// fixed order: split x = m * 2^e with m in [sqrt(2)/2, sqrt(2)), then
// ln(m) = 2*atanh(s) with s = (m-1)/(m+1), truncated odd series in s^2.
// Absolute error is far below the inverse-CDF approximation error.
inline double det_log(double x) {
    int e = 0;
    double m = std::frexp(x, &e);  // m in [0.5, 1)
    if (m < 0.70710678118654752440) {
        m *= 2.0;
        e -= 1;
    }
    double s = (m - 1.0) / (m + 1.0);
    double z = s * s;
    double poly = 1.0 / 21.0;
    poly = poly * z + 1.0 / 19.0;
    poly = poly * z + 1.0 / 17.0;
    poly = poly * z + 1.0 / 15.0;
    poly = poly * z + 1.0 / 13.0;
    poly = poly * z + 1.0 / 11.0;
    poly = poly * z + 1.0 / 9.0;
    poly = poly * z + 1.0 / 7.0;
    poly = poly * z + 1.0 / 5.0;
    poly = poly * z + 1.0 / 3.0;
    poly = poly * z + 1.0;
    constexpr double ln2 = 0.69314718055994530942;
    return 2.0 * s * poly + static_cast<double>(e) * ln2;
}

}  // namespace detail

// Inverse of the standard normal CDF, Acklam's rational approximation
// (|relative error| < 1.2e-9). u must lie in (0,1).
inline double inverse_normal_cdf(double u) {
    if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("inverse_normal_cdf: u outside (0,1)");
    constexpr double a1 = -3.969683028665376e+01, a2 = 2.209460984245205e+02,
                     a3 = -2.759285104469687e+02, a4 = 1.383577518672690e+02,
                     a5 = -3.066479806614716e+01, a6 = 2.506628277459239e+00;
    constexpr double b1 = -5.447609879822406e+01, b2 = 1.615858368580409e+02,
                     b3 = -1.556989798598866e+02, b4 = 6.680131188771972e+01,
                     b5 = -1.328068155288572e+01;
    constexpr double c1 = -7.784894002430293e-03, c2 = -3.223964580411365e-01,
                     c3 = -2.400758277161838e+00, c4 = -2.549732539343734e+00,
                     c5 = 4.374664141464968e+00, c6 = 2.938163982698783e+00;
    constexpr double d1 = 7.784695709041462e-03, d2 = 3.224671290700398e-01,
                     d3 = 2.445134137142996e+00, d4 = 3.754408661907416e+00;
    constexpr double p_low = 0.02425;

    if (u < p_low) {
        double q = std::sqrt(-2.0 * detail::det_log(u));
        return (((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) /
               ((((d1 * q + d2) * q + d3) * q + d4) * q + 1.0);
    }
    if (u > 1.0 - p_low) {
        double q = std::sqrt(-2.0 * detail::det_log(1.0 - u));
        return -(((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6) /
               ((((d1 * q + d2) * q + d3) * q + d4) * q + 1.0);
    }
    double q = u - 0.5;
    double r = q * q;
    return (((((a1 * r + a2) * r + a3) * r + a4) * r + a5) * r + a6) * q /
           (((((b1 * r + b2) * r + b3) * r + b4) * r + b5) * r + 1.0);
}

}  // namespace stegakit
