#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stegakit/backend.hpp"
#include "stegakit/digest.hpp"
#include "stegakit/latentops.hpp"
#include "stegakit/refgen.hpp"
#include "stegakit/scheduler.hpp"
#include "stegakit/seedkit.hpp"
#include "stegakit/tensor.hpp"

namespace stegakit {

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Every protocol knob. Defaults are the reference operating point: 50 steps,
// depth fraction 0.6 (0.7 for style material), 5% flip budget, 0.93 mixing,
// image-prompt weight 1, guidance 1.
struct StegoConfig {
    int steps = 50;
    double xi = 0.6;
    double eta = 0.05;
    double p = 0.93;
    float ip_weight = 1.0f;
    double guidance_scale = 1.0;

    std::string backend_kind = "toy";  // "toy" | "pretrained"
    std::string model_a = "toy:net/a";       // null-text side (hide-forward, recover-reverse)
    std::string model_b = "toy:net/b";       // prompt-2 side (hide-reverse, recover-forward)
    std::string refgen_model = "toy:net/ref";
    std::string model_dir;             // pretrained backends load weights from here

    // Research knobs, all off at the protocol operating point.
    std::string prompt1;               // non-empty breaks the null-text security argument
    bool control_in_stego = false;     // attach control to the prompt-2 side diffusion too
    bool transport_pair = false;       // ship both pair members instead of re-initializing
    bool allow_nondeterministic = false;

    std::string category = "content";  // content | style | similar

    void validate() const {
        if (steps < 1 || steps > 1000) throw PipelineError("steps must be in [1,1000]");
        if (!(xi > 0.0 && xi <= 1.0)) throw PipelineError("xi must be in (0,1]");
        if (!(eta >= 0.0 && eta <= 1.0)) throw PipelineError("eta must be in [0,1]");
        if (!(p > 0.0 && p <= 1.0)) throw PipelineError("mix p must be in (0,1]");
        if (ip_weight < 0.0f) throw PipelineError("ip-weight must be >= 0");
        if (category != "content" && category != "style" && category != "similar")
            throw PipelineError("category must be content, style, or similar");
        if (backend_kind != "toy" && backend_kind != "pretrained")
            throw PipelineError("backend must be 'toy' or 'pretrained'");
    }

    // Depth fraction depends on the material category unless the caller pinned
    // xi explicitly: 0.7 for style, 0.6 otherwise.
    static double default_xi_for(const std::string& category) {
        return category == "style" ? 0.7 : 0.6;
    }

    int depth() const {
        EdictParams ep{p, xi};
        return ep.depth(steps);
    }

    // Hash over every protocol-relevant field. There is no password field
    // anywhere in the config, so the hash is publishable.
    std::string config_hash() const {
        DigestWriter w;
        w.str("stega-config-v1");
        w.i32(steps);
        w.f64(xi);
        w.f64(eta);
        w.f64(p);
        w.f64(static_cast<double>(ip_weight));
        w.f64(guidance_scale);
        w.str(backend_kind);
        w.str(model_a);
        w.str(model_b);
        w.str(refgen_model);
        w.str(prompt1);
        w.i32(control_in_stego ? 1 : 0);
        w.i32(transport_pair ? 1 : 0);
        w.str(category);
        return w.finish_hex();
    }
};

// The three model slots of one protocol run. Slots may alias when the ids
// coincide.
struct BackendSet {
    std::shared_ptr<Backend> a;    // null-text side
    std::shared_ptr<Backend> b;    // prompt-2 side
    std::shared_ptr<Backend> ref;  // reference generation
};

// Secret-side record of one run: digests of the key-derived artifacts, call
// counts, the stage trace, and timing. Contains no password bytes; still, the
// mask/reference digests are key material fingerprints, so this record
// belongs in the private audit file, never in public metadata.
struct Audit {
    std::string config_hash;
    std::string mask_digest;
    std::string ref_digest;
    int depth = 0;
    long invert_calls = 0;
    long denoise_calls = 0;
    double elapsed_seconds = 0.0;
    std::vector<std::string> trace;
};

struct StegoResult {
    Image image;
    Audit audit;
    std::optional<Image> pair_second;  // only when transport_pair is on
};

namespace detail {

inline std::string cond_label(bool null_text, bool image_prompt, bool control) {
    std::string s = null_text ? "null" : "prompt2";
    if (image_prompt) s += "+ip";
    if (control) s += "+ctrl";
    return s;
}

template <typename F>
auto run_stage(std::vector<std::string>& trace, const std::string& label, F&& f) {
    trace.push_back(label);
    try {
        return f();
    } catch (const std::exception& e) {
        throw PipelineError("stage " + label + " failed: " + e.what());
    }
}

}  // namespace detail

// The mechanical mirror of a hide trace: the refgen head stays, the protocol
// tail is reversed with encode<->decode and invert<->denoise swapped (their
// model slot and conditioning travel along). recover's trace must equal
// mirror_trace(hide's trace); the equality is asserted by tests.
inline std::vector<std::string> mirror_trace(const std::vector<std::string>& trace) {
    std::vector<std::string> out;
    std::vector<std::string> tail;
    for (const auto& e : trace) {
        if (e.rfind("refgen", 0) == 0)
            out.push_back(e);
        else
            tail.push_back(e);
    }
    auto swap_op = [](std::string e) {
        auto swap_prefix = [&e](const char* from, const char* to) {
            const std::string f(from);
            if (e.rfind(f, 0) == 0) {
                e = to + e.substr(f.size());
                return true;
            }
            return false;
        };
        swap_prefix("encode:", "decode:") || swap_prefix("decode:", "encode:") ||
            swap_prefix("invert:", "denoise:") || swap_prefix("denoise:", "invert:");
        return e;
    };
    for (auto it = tail.rbegin(); it != tail.rend(); ++it) out.push_back(swap_op(*it));
    return out;
}

namespace detail {

struct RunContext {
    NoiseSchedule sched;
    EdictParams params;
    int depth = 0;
    Conditioning cond_a;  // prompt-1 side (null-text under the protocol)
    Conditioning cond_b;  // prompt-2 side (+ image prompt, + optional control)
    bool has_ip = false;
    bool has_ctrl = false;
};

inline RunContext make_context(const StegoConfig& cfg, const BackendSet& backends,
                               const std::string& prompt2, const std::optional<Image>& ref,
                               const std::optional<Conditioning::Control>& control) {
    RunContext ctx;
    ctx.sched = build_schedule(cfg.steps);
    ctx.params = EdictParams{cfg.p, cfg.xi};
    ctx.depth = ctx.params.depth(cfg.steps);

    ctx.cond_a.text_embedding = backends.a->embed_text(cfg.prompt1);
    ctx.cond_b.text_embedding = backends.b->embed_text(prompt2);
    if (ref && cfg.ip_weight != 0.0f) {
        ctx.cond_b.image_prompt =
            Conditioning::ImagePrompt{backends.b->embed_image(*ref), cfg.ip_weight};
        ctx.has_ip = true;
    }
    if (control && cfg.control_in_stego) {
        ctx.cond_b.control = *control;
        ctx.has_ctrl = true;
    }
    return ctx;
}

}  // namespace detail

// Hiding: reference generation, encode, null-text inversion to depth, keyed
// sign flip, prompt-2 + image-prompt generation back to the image end, decode
// of the x member. The y member is discarded unless transport_pair is set.
inline StegoResult hide(const Image& I_ori, const std::string& prompt2, const Password& password,
                        const std::optional<Conditioning::Control>& control,
                        const StegoConfig& cfg, const BackendSet& backends) {
    cfg.validate();
    if (prompt2.empty()) throw PipelineError("prompt2 must be non-empty");
    if (I_ori.shape.size() != 3 || I_ori.shape[0] != 3)
        throw PipelineError("input image must be (3,H,W), got " + shape_str(I_ori.shape));

    const auto t0 = std::chrono::steady_clock::now();
    StegoResult res;
    Audit& audit = res.audit;
    audit.config_hash = cfg.config_hash();

    RefOptions ro;
    ro.prompt2 = prompt2;
    ro.steps = cfg.steps;
    ro.guidance_scale = cfg.guidance_scale;
    ro.height = I_ori.shape[1];
    ro.width = I_ori.shape[2];
    ro.control = control;
    ro.allow_nondeterministic = cfg.allow_nondeterministic;
    Image I_ref = detail::run_stage(audit.trace, "refgen:" + cfg.refgen_model,
                                    [&] { return generate_reference(*backends.ref, password, ro); });
    audit.ref_digest = image_digest_hex(I_ref);

    auto ctx = detail::make_context(cfg, backends, prompt2, I_ref, control);
    audit.depth = ctx.depth;

    Tensor z = detail::run_stage(audit.trace, "encode:A", [&] { return backends.a->encode(I_ori); });
    CoupledPair pair = CoupledPair::from_latent(std::move(z));

    auto invert_calls = std::make_shared<long>(0);
    auto denoise_calls = std::make_shared<long>(0);
    NoisePredictor pred_a = make_guided_predictor(*backends.a, cfg.guidance_scale, invert_calls);
    NoisePredictor pred_b = make_guided_predictor(*backends.b, cfg.guidance_scale, denoise_calls);

    detail::run_stage(audit.trace,
                      "invert:A:" + detail::cond_label(cfg.prompt1.empty(), false, false), [&] {
                          return invert_to_depth(pair, ctx.sched, ctx.depth, ctx.params, ctx.cond_a,
                                                 pred_a);
                      });

    const SeedMaterial mask_seed = derive_seed(password, "noise-flip");
    FlipMask mask = generate_flip_mask(mask_seed, pair.x.shape, cfg.eta);
    audit.mask_digest = mask.digest_hex();
    detail::run_stage(audit.trace, "flip", [&] {
        flip_pair(pair, mask);
        return 0;
    });

    detail::run_stage(audit.trace, "denoise:B:" + detail::cond_label(false, ctx.has_ip, ctx.has_ctrl),
                      [&] {
                          return denoise_from_depth(pair, ctx.sched, ctx.depth, ctx.params,
                                                    ctx.cond_b, pred_b);
                      });

    res.image = detail::run_stage(audit.trace, "decode:B", [&] { return backends.b->decode(pair.x); });
    if (cfg.transport_pair) res.pair_second = backends.b->decode(pair.y);

    audit.invert_calls = *invert_calls;
    audit.denoise_calls = *denoise_calls;
    audit.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// Recovery with the correct password: the exact mirror of hide. The coupled
// pair is re-initialized from the transported image (y := x) unless the
// second member was shipped via transport_pair. When the hide-side audit is
// available, the regenerated reference is checked against its digest so a
// mismatch surfaces as an explicit error instead of silent quality loss.
inline StegoResult recover(const Image& I_enc, const std::string& prompt2, const Password& password,
                           const std::optional<Conditioning::Control>& control,
                           const StegoConfig& cfg, const BackendSet& backends,
                           const std::optional<std::string>& expected_ref_digest = std::nullopt,
                           const std::optional<Image>& pair_second = std::nullopt) {
    cfg.validate();
    if (prompt2.empty()) throw PipelineError("prompt2 must be non-empty");

    const auto t0 = std::chrono::steady_clock::now();
    StegoResult res;
    Audit& audit = res.audit;
    audit.config_hash = cfg.config_hash();

    RefOptions ro;
    ro.prompt2 = prompt2;
    ro.steps = cfg.steps;
    ro.guidance_scale = cfg.guidance_scale;
    ro.height = I_enc.shape.size() == 3 ? I_enc.shape[1] : 0;
    ro.width = I_enc.shape.size() == 3 ? I_enc.shape[2] : 0;
    ro.control = control;
    ro.allow_nondeterministic = cfg.allow_nondeterministic;
    Image I_ref = detail::run_stage(audit.trace, "refgen:" + cfg.refgen_model,
                                    [&] { return generate_reference(*backends.ref, password, ro); });
    audit.ref_digest = image_digest_hex(I_ref);
    if (expected_ref_digest && *expected_ref_digest != audit.ref_digest)
        throw PipelineError("reference mismatch: regenerated reference image digest " +
                            audit.ref_digest + " != expected " + *expected_ref_digest +
                            " (wrong password, changed refgen model, or corrupted audit)");

    auto ctx = detail::make_context(cfg, backends, prompt2, I_ref, control);
    audit.depth = ctx.depth;

    Tensor z = detail::run_stage(audit.trace, "encode:B", [&] { return backends.b->encode(I_enc); });
    CoupledPair pair = CoupledPair::from_latent(std::move(z));
    if (pair_second) {
        if (!cfg.transport_pair)
            throw PipelineError("second pair member supplied but transport_pair is off");
        pair.y = backends.b->encode(*pair_second);
        ensure_same_shape(pair.x, pair.y, "transported pair");
    } else if (cfg.transport_pair) {
        throw PipelineError(
            "transport_pair is on: recovery needs both pair members (pass the second image)");
    }

    auto invert_calls = std::make_shared<long>(0);
    auto denoise_calls = std::make_shared<long>(0);
    NoisePredictor pred_a = make_guided_predictor(*backends.a, cfg.guidance_scale, denoise_calls);
    NoisePredictor pred_b = make_guided_predictor(*backends.b, cfg.guidance_scale, invert_calls);

    detail::run_stage(audit.trace, "invert:B:" + detail::cond_label(false, ctx.has_ip, ctx.has_ctrl),
                      [&] {
                          return invert_to_depth(pair, ctx.sched, ctx.depth, ctx.params, ctx.cond_b,
                                                 pred_b);
                      });

    const SeedMaterial mask_seed = derive_seed(password, "noise-flip");
    FlipMask mask = generate_flip_mask(mask_seed, pair.x.shape, cfg.eta);
    audit.mask_digest = mask.digest_hex();
    detail::run_stage(audit.trace, "flip", [&] {
        flip_pair(pair, mask);
        return 0;
    });

    detail::run_stage(audit.trace,
                      "denoise:A:" + detail::cond_label(cfg.prompt1.empty(), false, false), [&] {
                          return denoise_from_depth(pair, ctx.sched, ctx.depth, ctx.params,
                                                    ctx.cond_a, pred_a);
                      });

    res.image = detail::run_stage(audit.trace, "decode:A", [&] { return backends.a->decode(pair.x); });

    audit.invert_calls = *invert_calls;
    audit.denoise_calls = *denoise_calls;
    audit.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// Attack scenario 1: recovery with only the public resources. No reference
// image (nothing to derive it from), no flip-back; the inversion runs under
// plain prompt-2 text conditioning.
inline StegoResult attack_recover_no_password(const Image& I_enc, const std::string& prompt2,
                                              const StegoConfig& cfg, const BackendSet& backends) {
    cfg.validate();
    if (prompt2.empty()) throw PipelineError("prompt2 must be non-empty");

    const auto t0 = std::chrono::steady_clock::now();
    StegoResult res;
    Audit& audit = res.audit;
    audit.config_hash = cfg.config_hash();

    auto ctx = detail::make_context(cfg, backends, prompt2, std::nullopt, std::nullopt);
    audit.depth = ctx.depth;

    Tensor z = detail::run_stage(audit.trace, "encode:B", [&] { return backends.b->encode(I_enc); });
    CoupledPair pair = CoupledPair::from_latent(std::move(z));

    auto invert_calls = std::make_shared<long>(0);
    auto denoise_calls = std::make_shared<long>(0);
    NoisePredictor pred_a = make_guided_predictor(*backends.a, cfg.guidance_scale, denoise_calls);
    NoisePredictor pred_b = make_guided_predictor(*backends.b, cfg.guidance_scale, invert_calls);

    detail::run_stage(audit.trace, "invert:B:" + detail::cond_label(false, false, false), [&] {
        return invert_to_depth(pair, ctx.sched, ctx.depth, ctx.params, ctx.cond_b, pred_b);
    });
    detail::run_stage(audit.trace,
                      "denoise:A:" + detail::cond_label(cfg.prompt1.empty(), false, false), [&] {
                          return denoise_from_depth(pair, ctx.sched, ctx.depth, ctx.params,
                                                    ctx.cond_a, pred_a);
                      });
    res.image = detail::run_stage(audit.trace, "decode:A", [&] { return backends.a->decode(pair.x); });

    audit.invert_calls = *invert_calls;
    audit.denoise_calls = *denoise_calls;
    audit.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// Attack scenario 2: the full recovery path run with a wrong password — wrong
// reference image, wrong flip mask. (This function cannot know the password is
// wrong; the caller/harness carries that knowledge.)
inline StegoResult attack_recover_wrong_password(const Image& I_enc, const std::string& prompt2,
                                                 const Password& wrong_password,
                                                 const std::optional<Conditioning::Control>& control,
                                                 const StegoConfig& cfg,
                                                 const BackendSet& backends) {
    return recover(I_enc, prompt2, wrong_password, control, cfg, backends);
}

}  // namespace stegakit
