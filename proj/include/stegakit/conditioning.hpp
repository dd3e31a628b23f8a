#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stegakit/digest.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

// Everything the noise predictor is conditioned on. The text embedding is
// always present (the empty prompt embeds to a real vector, not zeros); the
// image-prompt and control fragments are optional.
struct Conditioning {
    struct ImagePrompt {
        std::vector<float> embedding;
        float weight = 1.0f;  // 0 must behave exactly like "no image prompt"
    };
    struct Control {
        Image map;
        std::string type;  // "seg" | "pose"
        float scale = 1.0f;
    };

    std::vector<float> text_embedding;
    std::optional<ImagePrompt> image_prompt;
    std::optional<Control> control;

    // Digest of the effective conditioning. Fragments at zero strength are
    // excluded so that weight/scale 0 hashes identically to "absent".
    std::string effective_digest_hex() const {
        DigestWriter w;
        w.str("conditioning");
        w.bytes(text_embedding.data(), text_embedding.size() * sizeof(float));
        if (image_prompt && image_prompt->weight != 0.0f) {
            w.str("image-prompt");
            w.bytes(image_prompt->embedding.data(), image_prompt->embedding.size() * sizeof(float));
            w.f64(image_prompt->weight);
        }
        if (control && control->scale != 0.0f) {
            w.str("control");
            w.str(control->type);
            w.tensor(control->map);
            w.f64(control->scale);
        }
        return w.finish_hex();
    }
};

}  // namespace stegakit
