#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stegakit/conditioning.hpp"
#include "stegakit/latentops.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

struct ScheduleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Diffusion-time bookkeeping for a run of `steps` sampling steps carved out of
// a `t_train`-step training schedule. alpha_bar is the cumulative product of
// (1 - beta) over training timesteps; all schedule math is kept in double and
// only the latent updates themselves touch float data.
struct NoiseSchedule {
    int t_train = 1000;
    int steps = 0;
    std::vector<double> alpha_bar;     // length t_train, index = training timestep
    std::vector<int> timestep_map;     // length steps, ascending training timesteps
    double final_alpha_bar = 1.0;      // used as alpha_bar[prev] below the lowest step

    // Coefficients of one denoise step i (counting i=0 as the step whose
    // timestep is timestep_map[i]): new = a * old + b * eps_hat.
    struct StepCoeffs {
        double a = 1.0;
        double b = 0.0;
    };

    StepCoeffs step_coeffs(int i) const {
        if (i < 0 || i >= steps) throw ScheduleError("step index out of range: " + std::to_string(i));
        const double ab_cur = alpha_bar[static_cast<size_t>(timestep_map[static_cast<size_t>(i)])];
        const double ab_prev = (i == 0) ? final_alpha_bar
                                        : alpha_bar[static_cast<size_t>(timestep_map[static_cast<size_t>(i - 1)])];
        StepCoeffs c;
        c.a = std::sqrt(ab_prev / ab_cur);
        c.b = std::sqrt(1.0 - ab_prev) - c.a * std::sqrt(1.0 - ab_cur);
        return c;
    }

    // Product of the `a` coefficients over steps [0, depth). With a zero noise
    // predictor this is exactly the scale a latent picks up when denoised from
    // depth to the image end (and 1/product when inverted). Used as a
    // closed-form oracle in tests.
    double a_product(int depth) const {
        double prod = 1.0;
        for (int i = 0; i < depth; ++i) prod *= step_coeffs(i).a;
        return prod;
    }
};

// Scaled-linear beta schedule: sqrt(beta) interpolates linearly between
// sqrt(beta_start) and sqrt(beta_end) over t_train steps. Sampling timesteps
// use leading spacing: map[i] = i * (t_train / steps).
inline NoiseSchedule build_schedule(int steps, int t_train = 1000,
                                    double beta_start = 0.00085, double beta_end = 0.012) {
    if (t_train < 1) throw ScheduleError("t_train must be positive");
    if (steps < 1 || steps > t_train) throw ScheduleError("steps must be in [1, t_train]");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || !(beta_start <= beta_end))
        throw ScheduleError("betas must satisfy 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.t_train = t_train;
    s.steps = steps;
    s.alpha_bar.resize(static_cast<size_t>(t_train));
    const double sb0 = std::sqrt(beta_start);
    const double sb1 = std::sqrt(beta_end);
    double prod = 1.0;
    for (int t = 0; t < t_train; ++t) {
        const double frac = (t_train == 1) ? 0.0 : static_cast<double>(t) / static_cast<double>(t_train - 1);
        const double sqrt_beta = sb0 + (sb1 - sb0) * frac;
        const double beta = sqrt_beta * sqrt_beta;
        prod *= 1.0 - beta;
        s.alpha_bar[static_cast<size_t>(t)] = prod;
    }
    s.timestep_map.resize(static_cast<size_t>(steps));
    const int stride = t_train / steps;
    for (int i = 0; i < steps; ++i) s.timestep_map[static_cast<size_t>(i)] = i * stride;
    s.final_alpha_bar = s.alpha_bar[0];
    return s;
}

// Noise predictor contract: eps_hat = f(latent, training_timestep, cond).
// Must be a pure function of its arguments for the round trip to be exact.
template <typename S>
using NoisePredictorT = std::function<TensorT<S>(const TensorT<S>&, int, const Conditioning&)>;
using NoisePredictor = NoisePredictorT<float>;

struct EdictParams {
    double p = 0.93;  // mixing coefficient; 1 = fully decoupled
    double xi = 0.6;  // reversal ratio; depth = round(xi * steps), floored at 1

    void validate() const {
        if (!(p > 0.0 && p <= 1.0)) throw ScheduleError("mix p must be in (0, 1]");
        if (!(xi > 0.0 && xi <= 1.0)) throw ScheduleError("xi must be in (0, 1]");
    }

    int depth(int steps) const {
        validate();
        int d = static_cast<int>(std::lround(xi * static_cast<double>(steps)));
        if (d < 1) d = 1;
        if (d > steps) d = steps;
        return d;
    }
};

namespace detail {

template <typename S>
inline void axpb_inplace(TensorT<S>& out, double a, double b, const TensorT<S>& eps) {
    ensure_same_shape(out, eps, "predictor output");
    const size_t n = out.size();
    const S fa = static_cast<S>(a);
    const S fb = static_cast<S>(b);
    for (size_t i = 0; i < n; ++i) out.data[i] = fa * out.data[i] + fb * eps.data[i];
}

template <typename S>
inline void check_step_health(const TensorT<S>& t, const char* where, int timestep) {
    if (!t.all_finite())
        throw ScheduleError(std::string("diverged (non-finite values) in ") + where +
                            " at training timestep " + std::to_string(timestep));
}

}  // namespace detail

// One coupled denoise step at sampling index i (toward the image). Exactly two
// predictor calls: eps(y) drives x, then eps(x_inter) drives y. The mixing
// layer averages each member toward the other with weight (1-p); its inverse
// in edict_invert_step is algebraically exact, so a denoise/invert pair
// round-trips up to float re-association only.
template <typename S>
inline void edict_denoise_step(CoupledPairT<S>& pair, const NoiseSchedule& sched, int i,
                               const EdictParams& params, const Conditioning& cond,
                               const NoisePredictorT<S>& predict_noise) {
    const auto c = sched.step_coeffs(i);
    const int t = sched.timestep_map[static_cast<size_t>(i)];

    TensorT<S> eps_y = predict_noise(pair.y, t, cond);
    detail::axpb_inplace(pair.x, c.a, c.b, eps_y);          // x_inter
    TensorT<S> eps_x = predict_noise(pair.x, t, cond);
    detail::axpb_inplace(pair.y, c.a, c.b, eps_x);          // y_inter

    const S p = static_cast<S>(params.p);
    const S q = static_cast<S>(1.0 - params.p);
    const size_t n = pair.x.size();
    for (size_t k = 0; k < n; ++k)
        pair.x.data[k] = p * pair.x.data[k] + q * pair.y.data[k];
    for (size_t k = 0; k < n; ++k)
        pair.y.data[k] = p * pair.y.data[k] + q * pair.x.data[k];

    detail::check_step_health(pair.x, "edict_denoise_step", t);
    detail::check_step_health(pair.y, "edict_denoise_step", t);
}

// Exact mirror of edict_denoise_step (toward noise): unmix y then x, then
// undo the a/b updates in reverse order, calling the predictor on the same
// latents the forward step did.
template <typename S>
inline void edict_invert_step(CoupledPairT<S>& pair, const NoiseSchedule& sched, int i,
                              const EdictParams& params, const Conditioning& cond,
                              const NoisePredictorT<S>& predict_noise) {
    const auto c = sched.step_coeffs(i);
    const int t = sched.timestep_map[static_cast<size_t>(i)];

    const S p = static_cast<S>(params.p);
    const S q = static_cast<S>(1.0 - params.p);
    const size_t n = pair.x.size();
    for (size_t k = 0; k < n; ++k)
        pair.y.data[k] = (pair.y.data[k] - q * pair.x.data[k]) / p;     // y_inter
    for (size_t k = 0; k < n; ++k)
        pair.x.data[k] = (pair.x.data[k] - q * pair.y.data[k]) / p;     // x_inter

    TensorT<S> eps_x = predict_noise(pair.x, t, cond);
    ensure_same_shape(pair.y, eps_x, "predictor output");
    const S fa = static_cast<S>(c.a);
    const S fb = static_cast<S>(c.b);
    for (size_t k = 0; k < n; ++k)
        pair.y.data[k] = (pair.y.data[k] - fb * eps_x.data[k]) / fa;
    TensorT<S> eps_y = predict_noise(pair.y, t, cond);
    ensure_same_shape(pair.x, eps_y, "predictor output");
    for (size_t k = 0; k < n; ++k)
        pair.x.data[k] = (pair.x.data[k] - fb * eps_y.data[k]) / fa;

    detail::check_step_health(pair.x, "edict_invert_step", t);
    detail::check_step_health(pair.y, "edict_invert_step", t);
}

// Run the inversion from the image end up to `depth` steps of noise. Steps are
// visited ascending (i = 0 .. depth-1), the reverse of the denoise order.
// Returns the number of predictor calls made (always 2 * depth).
template <typename S>
inline int invert_to_depth(CoupledPairT<S>& pair, const NoiseSchedule& sched, int depth,
                           const EdictParams& params, const Conditioning& cond,
                           const NoisePredictorT<S>& predict_noise) {
    if (depth < 1 || depth > sched.steps)
        throw ScheduleError("depth must be in [1, steps], got " + std::to_string(depth));
    for (int i = 0; i < depth; ++i)
        edict_invert_step(pair, sched, i, params, cond, predict_noise);
    return 2 * depth;
}

// Run the generation from `depth` back down to the image end (i = depth-1 .. 0).
template <typename S>
inline int denoise_from_depth(CoupledPairT<S>& pair, const NoiseSchedule& sched, int depth,
                              const EdictParams& params, const Conditioning& cond,
                              const NoisePredictorT<S>& predict_noise) {
    if (depth < 1 || depth > sched.steps)
        throw ScheduleError("depth must be in [1, steps], got " + std::to_string(depth));
    for (int i = depth - 1; i >= 0; --i)
        edict_denoise_step(pair, sched, i, params, cond, predict_noise);
    return 2 * depth;
}

// Plain (uncoupled) DDIM denoise over the full schedule, used for reference
// image generation where invertibility is not needed. Single predictor call
// per step.
template <typename S>
inline TensorT<S> ddim_denoise(TensorT<S> latent, const NoiseSchedule& sched,
                               const Conditioning& cond, const NoisePredictorT<S>& predict_noise) {
    for (int i = sched.steps - 1; i >= 0; --i) {
        const auto c = sched.step_coeffs(i);
        const int t = sched.timestep_map[static_cast<size_t>(i)];
        TensorT<S> eps = predict_noise(latent, t, cond);
        detail::axpb_inplace(latent, c.a, c.b, eps);
        detail::check_step_health(latent, "ddim_denoise", t);
    }
    return latent;
}

}  // namespace stegakit
