#pragma once

#include <optional>
#include <string>
#include <utility>

#include "stegakit/backend.hpp"
#include "stegakit/digest.hpp"
#include "stegakit/scheduler.hpp"
#include "stegakit/seedkit.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

// Options for password-seeded reference image generation. The reference image
// is secret material: it is never published, and its digest is logged only on
// the private audit side.
struct RefOptions {
    std::string prompt2;
    int steps = 50;
    double guidance_scale = 1.0;
    int height = 512;
    int width = 512;
    std::optional<Conditioning::Control> control;
    // Non-deterministic backends break hide/recover agreement on I_ref; the
    // caller must opt in explicitly to run with one.
    bool allow_nondeterministic = false;
};

inline std::string image_digest_hex(const Image& img) {
    DigestWriter w;
    w.str("image");
    w.tensor(img);
    return w.finish_hex();
}

// The whole chain is deterministic: password -> seed -> initial Gaussian ->
// plain DDIM (no inversion ever needed for the reference) -> image. Hide and
// recover both call this and must arrive at the identical image.
inline Image generate_reference(const Backend& model, const Password& password,
                                const RefOptions& opt) {
    if (opt.prompt2.empty()) throw SeedError("refgen requires a non-empty prompt2");
    if (opt.steps < 1) throw ScheduleError("refgen steps must be >= 1");
    if (!model.info().deterministic && !opt.allow_nondeterministic)
        throw BackendError("refgen model '" + model.info().name +
                           "' is not deterministic; hide and recover would disagree on the "
                           "reference image (pass allow_nondeterministic to override)");

    const SeedMaterial seed = derive_seed(password, "refgen-init");
    Tensor latent = generate_gaussian(seed, model.latent_shape(opt.height, opt.width));

    Conditioning cond;
    cond.text_embedding = model.embed_text(opt.prompt2);
    if (opt.control) cond.control = *opt.control;

    NoiseSchedule sched = build_schedule(opt.steps);
    NoisePredictor predict = make_guided_predictor(model, opt.guidance_scale);
    latent = ddim_denoise(std::move(latent), sched, cond, predict);
    return model.decode(latent);
}

}  // namespace stegakit
