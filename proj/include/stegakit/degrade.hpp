#pragma once

#include <stdexcept>
#include <string>

#include <opencv2/imgproc.hpp>

#include "stegakit/imageio.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

// Channel degradations applied to the stego image before recovery, modeling
// what an adversary or transport does to the published file.

inline Image degrade_gaussian_blur(const Image& img, int kernel = 7, double sigma = 10.0) {
    if (kernel < 1 || kernel % 2 == 0) throw ImageIoError("blur kernel must be odd and positive");
    if (!(sigma > 0.0)) throw ImageIoError("blur sigma must be positive");
    cv::Mat m = to_mat_bgr32f(img);
    cv::Mat out;
    cv::GaussianBlur(m, out, cv::Size(kernel, kernel), sigma, sigma, cv::BORDER_REFLECT_101);
    return from_mat_bgr32f(out);
}

inline Image degrade_jpeg(const Image& img, int quality = 40) {
    return jpeg_roundtrip(img, quality);
}

// Named dispatch used by the evaluation harness ("none" is the identity).
inline Image apply_degradation(const Image& img, const std::string& name) {
    if (name == "none") return img;
    if (name == "gaussian_blur") return degrade_gaussian_blur(img);
    if (name == "jpeg") return degrade_jpeg(img);
    throw ImageIoError("unknown degradation '" + name + "' (expected none, gaussian_blur, jpeg)");
}

}  // namespace stegakit
