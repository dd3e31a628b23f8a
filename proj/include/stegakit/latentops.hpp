#pragma once

#include <stdexcept>

#include "stegakit/seedkit.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

// The two latent sequences tracked by the coupled transform. Inversion starts
// from x == y (both copies of the encoded image latent).
template <typename S>
struct CoupledPairT {
    TensorT<S> x;
    TensorT<S> y;

    CoupledPairT() = default;
    CoupledPairT(TensorT<S> x_, TensorT<S> y_) : x(std::move(x_)), y(std::move(y_)) {
        ensure_same_shape(x, y, "CoupledPair");
    }

    static CoupledPairT from_latent(const TensorT<S>& z) { return CoupledPairT(z, z); }
};

using CoupledPair = CoupledPairT<float>;

// Sign-flip encryption: out[i] = -in[i] where mask bit is set, in[i] otherwise.
// Negation is exact in floating point, so the operation is an involution.
template <typename S>
TensorT<S> noise_flip(const TensorT<S>& latent, const FlipMask& mask) {
    if (latent.shape != mask.shape)
        throw TensorError("noise_flip: latent shape " + shape_str(latent.shape) +
                          " does not match mask shape " + shape_str(mask.shape));
    ensure_finite(latent, "noise_flip");
    TensorT<S> out = latent;
    for (size_t i = 0; i < out.size(); ++i)
        if (mask.bits[i]) out[i] = -out[i];
    return out;
}

// Both members flipped with the identical mask; flipping only one would
// desynchronize the pair and break the exact inverse of the later denoise.
template <typename S>
CoupledPairT<S> flip_pair(const CoupledPairT<S>& pair, const FlipMask& mask) {
    return CoupledPairT<S>(noise_flip(pair.x, mask), noise_flip(pair.y, mask));
}

}  // namespace stegakit
