#pragma once

#include <memory>
#include <string>

#include "stegakit/backend.hpp"
#include "stegakit/onnx_backend.hpp"
#include "stegakit/pipeline.hpp"
#include "stegakit/toy_backend.hpp"

namespace stegakit {

inline std::shared_ptr<Backend> make_backend(const StegoConfig& cfg, const std::string& model_id) {
    if (ToyBackend::is_toy_id(model_id)) {
        if (cfg.backend_kind != "toy")
            throw BackendError("model id '" + model_id + "' is a toy id but backend is '" +
                               cfg.backend_kind + "'");
        return std::make_shared<ToyBackend>(model_id);
    }
    if (cfg.backend_kind != "pretrained")
        throw BackendError("model id '" + model_id +
                           "' requires the pretrained backend (--backend pretrained)");
    return std::make_shared<OnnxBackend>(cfg.model_dir, model_id);
}

// Build the three model slots, aliasing duplicates so a shared checkpoint is
// loaded once.
inline BackendSet make_backend_set(const StegoConfig& cfg) {
    BackendSet set;
    set.a = make_backend(cfg, cfg.model_a);
    set.b = cfg.model_b == cfg.model_a ? set.a : make_backend(cfg, cfg.model_b);
    if (cfg.refgen_model == cfg.model_a)
        set.ref = set.a;
    else if (cfg.refgen_model == cfg.model_b)
        set.ref = set.b;
    else
        set.ref = make_backend(cfg, cfg.refgen_model);
    return set;
}

}  // namespace stegakit
