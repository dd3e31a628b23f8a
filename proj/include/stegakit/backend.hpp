#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stegakit/conditioning.hpp"
#include "stegakit/scheduler.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a backend cannot run at all in this environment (missing model
// files, unsupported conditioning). Distinct from BackendError so callers can
// report "not available here" separately from "broke while running".
struct BackendUnavailable : BackendError {
    using BackendError::BackendError;
};

struct BackendInfo {
    std::string name;
    bool deterministic = true;      // same inputs → bit-identical outputs
    bool concurrent_safe = false;   // handle may be shared across threads
    int latent_channels = 4;
    int latent_downscale = 8;       // image pixels per latent cell per axis
};

// Abstraction over the denoiser + autoencoder + embedders for one model slot.
// All methods are pure functions of their arguments when info().deterministic.
class Backend {
  public:
    virtual ~Backend() = default;

    virtual BackendInfo info() const = 0;
    virtual std::vector<int> latent_shape(int image_height, int image_width) const = 0;

    virtual Tensor encode(const Image& image) const = 0;
    virtual Image decode(const Tensor& latent) const = 0;

    // Embedding of a text prompt. The empty string is valid (null-text) and
    // must produce a real embedding, never all zeros.
    virtual std::vector<float> embed_text(const std::string& prompt) const = 0;

    // Embedding of a reference image for image-prompt conditioning.
    virtual std::vector<float> embed_image(const Image& reference) const = 0;

    virtual Tensor predict_noise(const Tensor& latent, int t, const Conditioning& cond) const = 0;
};

// Attach a control fragment to existing conditioning. Control participates in
// reference generation by default and in the stego diffusion only behind an
// explicit config flag.
inline void attach_control(Conditioning& cond, Image control_map, const std::string& type,
                           float scale) {
    if (type != "seg" && type != "pose")
        throw BackendError("control type must be 'seg' or 'pose', got '" + type + "'");
    if (control_map.shape.size() != 3 || control_map.shape[0] != 3)
        throw BackendError("control map must be a (3,H,W) image, got " + shape_str(control_map.shape));
    if (scale < 0.0f) throw BackendError("control scale must be >= 0");
    cond.control = Conditioning::Control{std::move(control_map), type, scale};
}

// Scheduler-facing predictor bound to a backend, with an optional call
// counter for the two-calls-per-step instrumentation.
inline NoisePredictor make_predictor(const Backend& backend,
                                     std::shared_ptr<long> call_counter = nullptr) {
    return [&backend, call_counter](const Tensor& latent, int t, const Conditioning& cond) {
        if (call_counter) ++(*call_counter);
        Tensor eps = backend.predict_noise(latent, t, cond);
        ensure_finite(eps, "predict_noise output");
        return eps;
    };
}

// Classifier-free guidance wrapper. At scale 1 (the protocol default) it is a
// strict pass-through making a single conditional call; any other scale blends
// eps_uncond + scale * (eps_cond - eps_uncond), costing a second call.
inline NoisePredictor make_guided_predictor(const Backend& backend, double guidance_scale,
                                            std::shared_ptr<long> call_counter = nullptr) {
    if (guidance_scale == 1.0) return make_predictor(backend, call_counter);
    Conditioning uncond;
    uncond.text_embedding = backend.embed_text("");
    return [&backend, guidance_scale, call_counter,
            uncond](const Tensor& latent, int t, const Conditioning& cond) {
        if (call_counter) ++(*call_counter);
        Tensor eps_c = backend.predict_noise(latent, t, cond);
        Tensor eps_u = backend.predict_noise(latent, t, uncond);
        ensure_same_shape(eps_c, eps_u, "guided predictor");
        const float s = static_cast<float>(guidance_scale);
        for (size_t i = 0; i < eps_c.size(); ++i)
            eps_c.data[i] = eps_u.data[i] + s * (eps_c.data[i] - eps_u.data[i]);
        ensure_finite(eps_c, "guided predictor output");
        return eps_c;
    };
}

}  // namespace stegakit
