#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "stegakit/digest.hpp"
#include "stegakit/rng.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

struct SeedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// User-chosen secret. Never serialized into any public artifact; holders of
// the same secret reproduce the same masks, noise and reference images.
struct Password {
    std::string secret;

    explicit Password(std::string s) : secret(std::move(s)) {
        if (secret.empty()) throw SeedError("password must be non-empty");
    }
};

// 256-bit seed bound to the consumer that derived it.
struct SeedMaterial {
    Sha256 seed{};
    std::string context;

    PhiloxKey philox_key() const {
        auto le32 = [&](size_t off) {
            uint32_t v;
            std::memcpy(&v, seed.data() + off, 4);
            return v;
        };
        return PhiloxKey{le32(0), le32(4), le32(8), le32(12)};
    }
};

// Consumers that may derive seeds from a password. Each gets an independent
// Philox stream; adding a consumer means adding a label here.
inline const std::vector<std::string>& registered_seed_contexts() {
    static const std::vector<std::string> contexts = {"noise-flip", "refgen-init"};
    return contexts;
}

inline constexpr const char* kSeedDomain = "stegakit.seedkit.v1";

// seed = SHA-256(domain \x1f context \x1f password). The 0x1f separators plus
// the fixed label set make the field boundaries unambiguous. The domain
// constant is a parameter only so the self-test can demonstrate that a
// corrupted constant breaks cross-machine determinism; production callers use
// the default.
inline SeedMaterial derive_seed_with_domain(const Password& password, const std::string& context,
                                            const std::string& domain) {
    const auto& known = registered_seed_contexts();
    if (std::find(known.begin(), known.end(), context) == known.end())
        throw SeedError("derive_seed: unregistered context '" + context + "'");
    std::string payload;
    payload.reserve(domain.size() + context.size() + password.secret.size() + 2);
    payload += domain;
    payload += '\x1f';
    payload += context;
    payload += '\x1f';
    payload += password.secret;
    return SeedMaterial{sha256(payload), context};
}

inline SeedMaterial derive_seed(const Password& password, const std::string& context) {
    return derive_seed_with_domain(password, context, kSeedDomain);
}

// Binary mask with exactly floor(eta * numel) ones.
struct FlipMask {
    std::vector<int> shape;
    std::vector<uint8_t> bits;
    double eta = 0.0;

    size_t popcount() const {
        return static_cast<size_t>(std::count(bits.begin(), bits.end(), uint8_t(1)));
    }

    std::string digest_hex() const {
        DigestWriter w;
        w.str("flip-mask");
        w.u64(shape.size());
        for (int d : shape) w.u64(static_cast<uint64_t>(d));
        w.f64(eta);
        w.bytes(bits.data(), bits.size());
        return w.finish_hex();
    }
};

// Mask positions are the first k entries of a Fisher-Yates shuffle of all
// indices, driven by the seeded stream. eta is interpreted as the given
// double, so k = floor(eta * numel) exactly in double arithmetic.
inline FlipMask generate_flip_mask(const SeedMaterial& seed, const std::vector<int>& shape,
                                   double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw SeedError("generate_flip_mask: eta outside [0,1]");
    size_t n = shape_numel(shape);
    auto k = static_cast<size_t>(std::floor(eta * static_cast<double>(n)));

    FlipMask mask;
    mask.shape = shape;
    mask.eta = eta;
    mask.bits.assign(n, 0);
    if (k == 0) return mask;

    std::vector<uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    PhiloxSequence seq(seed.philox_key());
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + seq.next_below(static_cast<uint32_t>(n - i));
        std::swap(idx[i], idx[j]);
        mask.bits[idx[i]] = 1;
    }
    return mask;
}

// I.i.d. standard normal samples; element i is a pure function of (seed, i).
template <typename S = float>
TensorT<S> generate_gaussian_t(const SeedMaterial& seed, const std::vector<int>& shape) {
    size_t n = shape_numel(shape);
    PhiloxStream stream(seed.philox_key());
    std::vector<S> data(n);
    for (size_t i = 0; i < n; ++i)
        data[i] = static_cast<S>(inverse_normal_cdf(stream.uniform01(i)));
    return TensorT<S>(shape, std::move(data));
}

inline Tensor generate_gaussian(const SeedMaterial& seed, const std::vector<int>& shape) {
    return generate_gaussian_t<float>(seed, shape);
}

}  // namespace stegakit
