#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "stegakit/tensor.hpp"

namespace stegakit {

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// PSNR on the 8-bit scale (MAX = 255), inputs in [0,1] float. Capped at
// 100 dB: identical images hit the cap, and nothing reports above it.
inline double psnr(const Image& a, const Image& b) {
    ensure_same_shape(a, b, "psnr");
    if (a.size() == 0) throw MetricError("psnr of empty image");
    double se = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = (static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])) * 255.0;
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0) return 100.0;
    const double db = 10.0 * std::log10(255.0 * 255.0 / mse);
    return db > 100.0 ? 100.0 : db;
}

namespace detail {

// BT.601 luma on the 0-255 scale.
inline std::vector<double> luma_255(const Image& img) {
    const int h = img.shape[1], w = img.shape[2];
    const size_t plane = static_cast<size_t>(h) * static_cast<size_t>(w);
    std::vector<double> y(plane);
    for (size_t i = 0; i < plane; ++i) {
        y[i] = 255.0 * (0.299 * img.data[i] + 0.587 * img.data[plane + i] +
                        0.114 * img.data[2 * plane + i]);
    }
    return y;
}

inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> k(121);
        const double sigma = 1.5;
        double sum = 0.0;
        for (int dy = -5; dy <= 5; ++dy)
            for (int dx = -5; dx <= 5; ++dx) {
                const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                k[static_cast<size_t>((dy + 5) * 11 + (dx + 5))] = v;
                sum += v;
            }
        for (auto& v : k) v /= sum;
        return k;
    }();
    return w;
}

}  // namespace detail

// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03, L=255,
// computed on BT.601 luma over valid (fully interior) windows. Every term is
// symmetric in (a,b) under IEEE commutativity, so ssim(a,b) == ssim(b,a)
// bit-exactly.
inline double ssim(const Image& a, const Image& b) {
    ensure_same_shape(a, b, "ssim");
    if (a.shape.size() != 3 || a.shape[0] != 3) throw MetricError("ssim expects (3,H,W) images");
    const int h = a.shape[1], w = a.shape[2];
    if (h < 11 || w < 11) throw MetricError("ssim needs images at least 11x11");

    const auto ya = detail::luma_255(a);
    const auto yb = detail::luma_255(b);
    const auto& win = detail::ssim_window();
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);

    double total = 0.0;
    long count = 0;
    for (int cy = 5; cy < h - 5; ++cy) {
        for (int cx = 5; cx < w - 5; ++cx) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            size_t k = 0;
            for (int dy = -5; dy <= 5; ++dy) {
                const size_t row = static_cast<size_t>(cy + dy) * static_cast<size_t>(w);
                for (int dx = -5; dx <= 5; ++dx, ++k) {
                    const double va = ya[row + static_cast<size_t>(cx + dx)];
                    const double vb = yb[row + static_cast<size_t>(cx + dx)];
                    const double wk = win[k];
                    mu_a += wk * va;
                    mu_b += wk * vb;
                    aa += wk * va * va;
                    bb += wk * vb * vb;
                    ab += wk * va * vb;
                }
            }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace stegakit
