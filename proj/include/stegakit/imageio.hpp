#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "stegakit/tensor.hpp"

namespace stegakit {

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Planar (3,H,W) RGB float <-> interleaved BGR cv::Mat. OpenCV's codecs all
// speak BGR, so the swap lives here and nowhere else.

inline cv::Mat to_mat_bgr32f(const Image& img) {
    if (img.shape.size() != 3 || img.shape[0] != 3)
        throw ImageIoError("expected a (3,H,W) image, got " + shape_str(img.shape));
    const int h = img.shape[1], w = img.shape[2];
    cv::Mat m(h, w, CV_32FC3);
    const size_t plane = static_cast<size_t>(h) * static_cast<size_t>(w);
    for (int y = 0; y < h; ++y) {
        auto* row = m.ptr<cv::Vec3f>(y);
        const size_t off = static_cast<size_t>(y) * static_cast<size_t>(w);
        for (int x = 0; x < w; ++x) {
            const size_t i = off + static_cast<size_t>(x);
            row[x] = cv::Vec3f(img.data[2 * plane + i], img.data[plane + i], img.data[i]);
        }
    }
    return m;
}

inline Image from_mat_bgr32f(const cv::Mat& m) {
    if (m.type() != CV_32FC3) throw ImageIoError("expected CV_32FC3 mat");
    const int h = m.rows, w = m.cols;
    Image img = Image::zeros({3, h, w});
    const size_t plane = static_cast<size_t>(h) * static_cast<size_t>(w);
    for (int y = 0; y < h; ++y) {
        const auto* row = m.ptr<cv::Vec3f>(y);
        const size_t off = static_cast<size_t>(y) * static_cast<size_t>(w);
        for (int x = 0; x < w; ++x) {
            const size_t i = off + static_cast<size_t>(x);
            img.data[i] = row[x][2];
            img.data[plane + i] = row[x][1];
            img.data[2 * plane + i] = row[x][0];
        }
    }
    return img;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// 8-bit quantization used for PNG/JPEG output: clamp to [0,1], scale, round
// half away from zero. The inverse (load) divides by 255.
inline cv::Mat quantize_8bit(const Image& img) {
    cv::Mat f = to_mat_bgr32f(img);
    cv::Mat out(f.rows, f.cols, CV_8UC3);
    for (int y = 0; y < f.rows; ++y) {
        const auto* src = f.ptr<cv::Vec3f>(y);
        auto* dst = out.ptr<cv::Vec3b>(y);
        for (int x = 0; x < f.cols; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(src[x][c], 0.0f, 1.0f);
                dst[x][c] = static_cast<uint8_t>(std::lround(v * 255.0f));
            }
        }
    }
    return out;
}

inline Image from_mat_8bit(const cv::Mat& m) {
    if (m.type() != CV_8UC3) throw ImageIoError("expected CV_8UC3 mat");
    cv::Mat f;
    m.convertTo(f, CV_32FC3, 1.0 / 255.0);
    return from_mat_bgr32f(f);
}

// Formats: .png and .jpg/.jpeg are 8-bit (lossy in value range); .pfm is raw
// float32 and round-trips bit-exactly — it is the transport used when the
// stego payload must survive without quantization (toy backend latents are
// not confined to [0,1]).
inline void save_image(const std::string& path, const Image& img, int jpeg_quality = 95) {
    bool ok = false;
    if (has_suffix(path, ".pfm")) {
        ensure_finite(img, "pfm save");
        ok = cv::imwrite(path, to_mat_bgr32f(img));
    } else if (has_suffix(path, ".png")) {
        ok = cv::imwrite(path, quantize_8bit(img));
    } else if (has_suffix(path, ".jpg") || has_suffix(path, ".jpeg")) {
        ok = cv::imwrite(path, quantize_8bit(img), {cv::IMWRITE_JPEG_QUALITY, jpeg_quality});
    } else {
        throw ImageIoError("unsupported image extension (use .png, .jpg, or .pfm): " + path);
    }
    if (!ok) throw ImageIoError("failed to write image: " + path);
}

inline Image load_image(const std::string& path) {
    if (has_suffix(path, ".pfm")) {
        cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
        if (m.empty()) throw ImageIoError("failed to read image: " + path);
        if (m.type() == CV_32FC1) cv::cvtColor(m, m, cv::COLOR_GRAY2BGR);
        if (m.type() != CV_32FC3) throw ImageIoError("unsupported pfm layout in " + path);
        return from_mat_bgr32f(m);
    }
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw ImageIoError("failed to read image: " + path);
    return from_mat_8bit(m);
}

// JPEG encode/decode through the real codec at quality Q, in memory.
inline Image jpeg_roundtrip(const Image& img, int quality) {
    if (quality < 1 || quality > 100) throw ImageIoError("jpeg quality must be in [1,100]");
    std::vector<uchar> buf;
    if (!cv::imencode(".jpg", quantize_8bit(img), buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw ImageIoError("jpeg encode failed");
    cv::Mat m = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (m.empty()) throw ImageIoError("jpeg decode failed");
    return from_mat_8bit(m);
}

}  // namespace stegakit
