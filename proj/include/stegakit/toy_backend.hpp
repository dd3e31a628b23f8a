#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stegakit/backend.hpp"
#include "stegakit/digest.hpp"
#include "stegakit/seedkit.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

// Analytic test backend. The autoencoder is the identity map (latent == image
// planes), so pipeline round-trip tests isolate scheduler and flip errors from
// autoencoder loss. Three denoiser kinds, selected by model id:
//
//   toy:zero         eps == 0
//   toy:affine:C     eps == C * latent (latent-coupled; used for drift studies)
//   toy:net[/TAG]    eps == sum of deterministic Gaussian fields seeded by the
//                    conditioning fragments and the timestep
//
// The net kind deliberately ignores the latent value: conditioning-field noise
// cancels exactly between hide and recover, so the transported-member
// re-initialization stays exact and key sensitivity is still exercised (wrong
// password → wrong fields → wrong reconstruction). Latent-coupled behavior is
// covered by the affine kind and the scheduler property tests.
class ToyBackend final : public Backend {
  public:
    static bool is_toy_id(const std::string& model_id) {
        return model_id.rfind("toy:", 0) == 0;
    }

    explicit ToyBackend(std::string model_id) : model_id_(std::move(model_id)) {
        std::string body = model_id_.substr(4);  // past "toy:"
        if (body == "zero") {
            kind_ = Kind::Zero;
        } else if (body.rfind("affine:", 0) == 0) {
            kind_ = Kind::Affine;
            try {
                coeff_ = std::stof(body.substr(7));
            } catch (const std::exception&) {
                throw BackendError("bad affine coefficient in model id '" + model_id_ + "'");
            }
        } else if (body == "net" || body.rfind("net/", 0) == 0) {
            kind_ = Kind::Net;
        } else {
            throw BackendError("unknown toy backend kind in model id '" + model_id_ +
                               "' (expected toy:zero, toy:affine:C, or toy:net[/tag])");
        }
    }

    BackendInfo info() const override {
        BackendInfo i;
        i.name = model_id_;
        i.deterministic = true;
        i.concurrent_safe = true;
        i.latent_channels = 3;
        i.latent_downscale = 1;
        return i;
    }

    std::vector<int> latent_shape(int image_height, int image_width) const override {
        if (image_height < 1 || image_width < 1) throw BackendError("image dimensions must be positive");
        return {3, image_height, image_width};
    }

    Tensor encode(const Image& image) const override {
        if (image.shape.size() != 3 || image.shape[0] != 3)
            throw BackendError("toy encode expects a (3,H,W) image, got " + shape_str(image.shape));
        ensure_finite(image, "toy encode input");
        return image;
    }

    Image decode(const Tensor& latent) const override {
        if (latent.shape.size() != 3 || latent.shape[0] != 3)
            throw BackendError("toy decode expects a (3,H,W) latent, got " + shape_str(latent.shape));
        ensure_finite(latent, "toy decode input");
        return latent;
    }

    std::vector<float> embed_text(const std::string& prompt) const override {
        DigestWriter w;
        w.str("toy-embed-text");
        w.str(model_id_);
        w.str(prompt);
        return embedding_from(w.finish());
    }

    std::vector<float> embed_image(const Image& reference) const override {
        DigestWriter w;
        w.str("toy-embed-image");
        w.str(model_id_);
        w.tensor(reference);
        return embedding_from(w.finish());
    }

    Tensor predict_noise(const Tensor& latent, int t, const Conditioning& cond) const override {
        ensure_finite(latent, "toy predict_noise input");
        switch (kind_) {
            case Kind::Zero:
                return Tensor::zeros(latent.shape);
            case Kind::Affine: {
                Tensor eps = latent;
                for (auto& v : eps.data) v *= coeff_;
                return eps;
            }
            case Kind::Net:
            default: {
                if (cond.text_embedding.empty())
                    throw BackendError("toy net denoiser requires a text embedding (null-text embeds too)");
                Tensor eps = field("text", cond.text_embedding, t, latent.shape);
                if (cond.image_prompt && cond.image_prompt->weight != 0.0f) {
                    Tensor f = field("image-prompt", cond.image_prompt->embedding, t, latent.shape);
                    const float w = cond.image_prompt->weight;
                    for (size_t i = 0; i < eps.size(); ++i) eps.data[i] += w * f.data[i];
                }
                if (cond.control && cond.control->scale != 0.0f) {
                    DigestWriter cw;
                    cw.str(cond.control->type);
                    cw.tensor(cond.control->map);
                    Tensor f = field_raw(cw.finish(), t, latent.shape);
                    const float s = cond.control->scale;
                    for (size_t i = 0; i < eps.size(); ++i) eps.data[i] += s * f.data[i];
                }
                return eps;
            }
        }
    }

  private:
    enum class Kind { Zero, Affine, Net };

    std::vector<float> embedding_from(const Sha256& digest) const {
        SeedMaterial sm{digest, "toy-embedding"};
        Tensor t = generate_gaussian(sm, {16});
        return t.data;
    }

    Tensor field(const char* role, const std::vector<float>& embedding, int t,
                 const std::vector<int>& shape) const {
        DigestWriter w;
        w.str(role);
        w.bytes(embedding.data(), embedding.size() * sizeof(float));
        return field_raw(w.finish(), t, shape);
    }

    Tensor field_raw(const Sha256& fragment_digest, int t, const std::vector<int>& shape) const {
        DigestWriter w;
        w.str("toy-field-v1");
        w.str(model_id_);
        w.bytes(fragment_digest.data(), fragment_digest.size());
        w.i32(t);
        SeedMaterial sm{w.finish(), "toy-field"};
        return generate_gaussian(sm, shape);
    }

    std::string model_id_;
    Kind kind_ = Kind::Net;
    float coeff_ = 0.0f;
};

}  // namespace stegakit
