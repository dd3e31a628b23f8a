#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace stegakit {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

inline size_t shape_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw TensorError("empty tensor shape");
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw TensorError("non-positive tensor dimension in " + shape_str(shape));
        n *= static_cast<size_t>(d);
    }
    return n;
}

// Dense row-major tensor. Latents use (channels, height, width); images are
// (3, height, width) with pixel values nominally in [0,1].
template <typename S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;

    TensorT() = default;
    TensorT(std::vector<int> shape_, std::vector<S> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (data.size() != shape_numel(shape))
            throw TensorError("tensor data size does not match shape " + shape_str(shape));
    }

    static TensorT zeros(std::vector<int> shape_) {
        size_t n = shape_numel(shape_);
        return TensorT(std::move(shape_), std::vector<S>(n, S(0)));
    }
    static TensorT full(std::vector<int> shape_, S value) {
        size_t n = shape_numel(shape_);
        return TensorT(std::move(shape_), std::vector<S>(n, value));
    }

    size_t size() const { return data.size(); }
    S& operator[](size_t i) { return data[i]; }
    const S& operator[](size_t i) const { return data[i]; }

    bool same_shape(const TensorT& other) const { return shape == other.shape; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](S v) { return std::isfinite(v); });
    }

    template <typename T>
    TensorT<T> cast() const {
        std::vector<T> out(data.size());
        for (size_t i = 0; i < data.size(); ++i) out[i] = static_cast<T>(data[i]);
        return TensorT<T>(shape, std::move(out));
    }
};

using Tensor = TensorT<float>;
using Image = TensorT<float>;  // (3, H, W), RGB

template <typename S>
void ensure_finite(const TensorT<S>& t, const std::string& where) {
    if (!t.all_finite()) throw TensorError(where + ": non-finite values in tensor");
}

template <typename S>
void ensure_same_shape(const TensorT<S>& a, const TensorT<S>& b, const std::string& where) {
    if (!a.same_shape(b))
        throw TensorError(where + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

template <typename S>
S max_abs_diff(const TensorT<S>& a, const TensorT<S>& b) {
    ensure_same_shape(a, b, "max_abs_diff");
    S m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename S>
double mean_abs_diff(const TensorT<S>& a, const TensorT<S>& b) {
    ensure_same_shape(a, b, "mean_abs_diff");
    if (a.size() == 0) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
    return acc / static_cast<double>(a.size());
}

inline int image_height(const Image& img) {
    if (img.shape.size() != 3 || img.shape[0] != 3)
        throw TensorError("expected (3,H,W) image, got " + shape_str(img.shape));
    return img.shape[1];
}
inline int image_width(const Image& img) {
    if (img.shape.size() != 3 || img.shape[0] != 3)
        throw TensorError("expected (3,H,W) image, got " + shape_str(img.shape));
    return img.shape[2];
}

}  // namespace stegakit
