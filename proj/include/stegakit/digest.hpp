#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "stegakit/tensor.hpp"

namespace stegakit {

using Sha256 = std::array<uint8_t, 32>;

inline Sha256 sha256(const void* data, size_t len) {
    Sha256 out{};
    unsigned int out_len = 0;
    if (EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) != 1 || out_len != 32)
        throw std::runtime_error("sha256: EVP_Digest failed");
    return out;
}

inline Sha256 sha256(const std::string& s) { return sha256(s.data(), s.size()); }
inline Sha256 sha256(const std::vector<uint8_t>& v) { return sha256(v.data(), v.size()); }

inline std::string hex(const Sha256& d) {
    static const char* k = "0123456789abcdef";
    std::string s(64, '0');
    for (size_t i = 0; i < d.size(); ++i) {
        s[2 * i] = k[d[i] >> 4];
        s[2 * i + 1] = k[d[i] & 0xF];
    }
    return s;
}

// Incremental builder for digests over heterogeneous fields. Each field is
// length-framed so adjacent fields cannot collide by concatenation.
class DigestWriter {
public:
    void bytes(const void* p, size_t n) {
        append_u64(n);
        const auto* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void str(const std::string& s) { bytes(s.data(), s.size()); }
    void u64(uint64_t v) { append_u64(v); }
    void i32(int32_t v) { append_u64(static_cast<uint64_t>(static_cast<uint32_t>(v))); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        append_u64(bits);
    }

    template <typename S>
    void tensor(const TensorT<S>& t) {
        append_u64(t.shape.size());
        for (int d : t.shape) append_u64(static_cast<uint64_t>(d));
        bytes(t.data.data(), t.data.size() * sizeof(S));
    }

    Sha256 finish() const { return sha256(buf_.data(), buf_.size()); }
    std::string finish_hex() const { return hex(finish()); }

private:
    void append_u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    std::vector<uint8_t> buf_;
};

}  // namespace stegakit
