#pragma once

#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stegakit/backends.hpp"
#include "stegakit/latentops.hpp"
#include "stegakit/metrics.hpp"
#include "stegakit/pipeline.hpp"
#include "stegakit/rng.hpp"
#include "stegakit/scheduler.hpp"
#include "stegakit/seedkit.hpp"

namespace stegakit {

// Frozen regression fixture: derive_seed("test-password", "noise-flip") under
// the production domain constant. Any change to the hash layout, domain
// string, or separator bytes shows up here (and breaks every deployed mask).
inline constexpr const char* kGoldenSeedHex =
    "9293b2eb06bdd8cbea774df64fbbfe599fda00dfce430d8652dc035ccacd7154";

// Deterministic synthetic test image: smooth gradients plus seeded Gaussian
// texture, squashed into [0,1]. Texture matters: blur/TV and SSIM checks need
// non-trivial local structure.
inline Image make_test_image(int index, int height = 64, int width = 64) {
    DigestWriter w;
    w.str("test-image");
    w.i32(index);
    SeedMaterial sm{w.finish(), "fixture"};
    Tensor g = generate_gaussian(sm, {3, height, width});
    Image img = Image::zeros({3, height, width});
    const size_t plane = static_cast<size_t>(height) * static_cast<size_t>(width);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const size_t i = static_cast<size_t>(c) * plane +
                                 static_cast<size_t>(y) * static_cast<size_t>(width) +
                                 static_cast<size_t>(x);
                const double ramp = (0.2 + 0.6 * (x + y) / double(width + height)) *
                                    (0.5 + 0.25 * c);
                const double v = ramp + 0.08 * g.data[i];
                img.data[i] = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
            }
        }
    }
    return img;
}

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct SelftestOptions {
    // Deliberately corrupted domain-separation constant. The mutation leaves
    // in-process involution properties intact but breaks the frozen golden
    // seed and any cross-process digest agreement — demonstrating that the
    // test harness would catch a silently changed constant.
    bool mutate_seed_constant = false;

    std::string seed_domain() const {
        return mutate_seed_constant ? "stegakit.seedkit.v1-MUTATED" : kSeedDomain;
    }
};

namespace selfcheck {

inline CheckResult philox_kat() {
    CheckResult r{"philox-kat", false, ""};
    // Counter/key of all zeros and all ones, plus the pi-digits vector, from
    // the published Random123 known-answer set.
    const std::array<uint32_t, 4> zero = philox4x32({0, 0, 0, 0}, 0, 0);
    const std::array<uint32_t, 4> ones =
        philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, 0xffffffff, 0xffffffff);
    const std::array<uint32_t, 4> pi =
        philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, 0xa4093822, 0x299f31d0);
    const bool ok_zero = zero == std::array<uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8};
    const bool ok_ones = ones == std::array<uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd};
    const bool ok_pi = pi == std::array<uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1};
    r.pass = ok_zero && ok_ones && ok_pi;
    r.detail = r.pass ? "3/3 vectors" : "known-answer vectors do not match";
    return r;
}

inline CheckResult golden_seed(const SelftestOptions& opt) {
    CheckResult r{"golden-seed", false, ""};
    const SeedMaterial sm =
        derive_seed_with_domain(Password("test-password"), "noise-flip", opt.seed_domain());
    const std::string got = hex(sm.seed);
    r.pass = got == kGoldenSeedHex;
    r.detail = r.pass ? "matches frozen vector" : "derived " + got.substr(0, 16) + "... != frozen";
    return r;
}

inline CheckResult involution() {
    CheckResult r{"involution", false, ""};
    int good = 0;
    const int trials = 100;
    for (int i = 0; i < trials; ++i) {
        DigestWriter w;
        w.str("involution-case");
        w.i32(i);
        SeedMaterial sm{w.finish(), "selftest"};
        Tensor x = generate_gaussian(sm, {4, 16, 16});
        const double eta = (i % 4 == 0) ? 0.01 : (i % 4 == 1) ? 0.05 : (i % 4 == 2) ? 0.5 : 1.0;
        FlipMask m = generate_flip_mask(sm, x.shape, eta);
        Tensor y = noise_flip(noise_flip(x, m), m);
        if (y.data == x.data) ++good;
    }
    r.pass = good == trials;
    r.detail = std::to_string(good) + "/" + std::to_string(trials) + " bit-identical";
    return r;
}

inline CheckResult mask_budget(const SelftestOptions& opt) {
    CheckResult r{"mask-budget", false, ""};
    const SeedMaterial sm =
        derive_seed_with_domain(Password("selftest-password"), "noise-flip", opt.seed_domain());
    struct Case {
        std::vector<int> shape;
        double eta;
    };
    const std::vector<Case> cases = {{{4, 64, 64}, 0.05}, {{3, 64, 64}, 0.05}, {{1, 100}, 0.333},
                                     {{7, 11, 13}, 0.0},  {{2, 2}, 1.0}};
    bool all = true;
    for (const auto& c : cases) {
        FlipMask m = generate_flip_mask(sm, c.shape, c.eta);
        const size_t n = shape_numel(c.shape);
        const size_t want = static_cast<size_t>(c.eta * static_cast<double>(n));
        if (m.popcount() != want) all = false;
    }
    r.pass = all;
    r.detail = all ? "popcount == floor(eta*N) on all cases" : "popcount mismatch";
    return r;
}

}  // namespace selfcheck

// One cell of the coupled-exactness grid. The unmix half of an EDICT step
// scales the pair-difference component by 1/p^2, so denoisers whose output
// depends on the latent (the affine kind) accumulate real pair divergence
// that float32 cannot absorb at small p beyond shallow depths: at p=0.5 the
// gain is 4x per step and the mantissa is exhausted near depth 10. Denoisers
// that ignore the latent (zero, net) keep the pair bit-identical, so every
// depth is exact at any p. Cells outside float32 reach are marked excluded
// and carry the reason.
struct ExactnessCase {
    std::string kind;
    double p;
    double xi;
    bool included;
    std::string reason;
};

inline std::vector<ExactnessCase> coupled_exactness_cases() {
    std::vector<ExactnessCase> cases;
    for (const std::string kind : {"toy:zero", "toy:affine:0.1", "toy:net/selftest"}) {
        const bool latent_coupled = kind.rfind("toy:affine", 0) == 0;
        for (const double p : {0.5, 0.93, 1.0}) {
            for (const double xi : {0.2, 0.6, 1.0}) {
                ExactnessCase c{kind, p, xi, true, ""};
                if (latent_coupled && p == 0.5 && xi > 0.2) {
                    c.included = false;
                    c.reason = "unmix gain (1/p^2)^depth = 4^depth exceeds float32 significance";
                }
                cases.push_back(std::move(c));
            }
        }
    }
    return cases;
}

// Round-trip error for one grid cell (invert to depth, denoise back, compare
// against the original latent).
inline double exactness_case_error(const ExactnessCase& c, const NoiseSchedule& sched) {
    ToyBackend toy(c.kind);
    Conditioning cond;
    cond.text_embedding = toy.embed_text("selftest prompt");
    NoisePredictor pred = make_predictor(toy);
    DigestWriter w;
    w.str("round-trip-seed");
    w.str(c.kind);
    SeedMaterial sm{w.finish(), "selftest"};
    Tensor z = generate_gaussian(sm, {3, 32, 32});
    CoupledPair pair = CoupledPair::from_latent(z);
    EdictParams params{c.p, c.xi};
    const int depth = params.depth(sched.steps);
    invert_to_depth(pair, sched, depth, params, cond, pred);
    denoise_from_depth(pair, sched, depth, params, cond, pred);
    return static_cast<double>(max_abs_diff(pair.x, z));
}

namespace selfcheck {

inline CheckResult coupled_round_trip() {
    CheckResult r{"coupled-round-trip", false, ""};
    const NoiseSchedule sched = build_schedule(50);
    double worst = 0.0;
    int run = 0;
    int excluded = 0;
    for (const ExactnessCase& c : coupled_exactness_cases()) {
        if (!c.included) {
            ++excluded;
            continue;
        }
        worst = std::max(worst, exactness_case_error(c, sched));
        ++run;
    }
    r.pass = worst < 1e-4;
    std::ostringstream os;
    os << "max |roundtrip - id| = " << worst << " over " << run << " cells (< 1e-4 required); "
       << excluded << " latent-coupled p=0.5 cells excluded (4x/step unmix gain vs float32)";
    r.detail = os.str();
    return r;
}

inline CheckResult protocol_round_trip() {
    CheckResult r{"protocol-round-trip", false, ""};
    StegoConfig cfg;
    BackendSet set = make_backend_set(cfg);
    double worst = 1e9;
    for (int i = 0; i < 2; ++i) {
        Image ori = make_test_image(i);
        Password pw("selftest-password-" + std::to_string(i));
        StegoResult enc = hide(ori, "a bright meadow", pw, std::nullopt, cfg, set);
        StegoResult rec = recover(enc.image, "a bright meadow", pw, std::nullopt, cfg, set,
                                  enc.audit.ref_digest);
        worst = std::min(worst, psnr(ori, rec.image));
    }
    r.pass = worst > 50.0;
    std::ostringstream os;
    os << "min recovery PSNR = " << worst << " dB (> 50 required)";
    r.detail = os.str();
    return r;
}

inline CheckResult key_sensitivity() {
    CheckResult r{"key-sensitivity", false, ""};
    StegoConfig cfg;
    BackendSet set = make_backend_set(cfg);
    Image ori = make_test_image(7);
    Password pw("selftest-correct-key");
    StegoResult enc = hide(ori, "a red lighthouse", pw, std::nullopt, cfg, set);
    const double correct = psnr(ori, recover(enc.image, "a red lighthouse", pw, std::nullopt, cfg,
                                             set, enc.audit.ref_digest)
                                         .image);
    const double none = psnr(ori, attack_recover_no_password(enc.image, "a red lighthouse", cfg,
                                                             set)
                                      .image);
    const double wrong =
        psnr(ori, attack_recover_wrong_password(enc.image, "a red lighthouse",
                                                Password("selftest-wrong-key"), std::nullopt, cfg,
                                                set)
                      .image);
    r.pass = (correct - none > 20.0) && (correct - wrong > 20.0);
    std::ostringstream os;
    os << "correct " << correct << " dB, none " << none << " dB, wrong " << wrong
       << " dB (margins > 20 required)";
    r.detail = os.str();
    return r;
}

inline CheckResult determinism() {
    CheckResult r{"determinism", false, ""};
    StegoConfig cfg;
    BackendSet set = make_backend_set(cfg);
    Image ori = make_test_image(3);
    Password pw("selftest-determinism");
    StegoResult a = hide(ori, "a quiet harbor", pw, std::nullopt, cfg, set);
    StegoResult b = hide(ori, "a quiet harbor", pw, std::nullopt, cfg, set);
    r.pass = a.image.data == b.image.data && a.audit.mask_digest == b.audit.mask_digest &&
             a.audit.ref_digest == b.audit.ref_digest;
    r.detail = r.pass ? "two runs bit-identical" : "repeated runs differ";
    return r;
}

}  // namespace selfcheck

inline std::vector<CheckResult> run_selftest(const SelftestOptions& opt) {
    std::vector<CheckResult> results;
    results.push_back(selfcheck::philox_kat());
    results.push_back(selfcheck::golden_seed(opt));
    results.push_back(selfcheck::involution());
    results.push_back(selfcheck::mask_budget(opt));
    results.push_back(selfcheck::coupled_round_trip());
    results.push_back(selfcheck::protocol_round_trip());
    results.push_back(selfcheck::key_sensitivity());
    results.push_back(selfcheck::determinism());
    return results;
}

// Mask digest for the given parameters, derived exactly the way the pipeline
// does it. Used by the cross-process determinism check: a child process must
// print the identical digest.
inline std::string selftest_mask_digest(const std::string& password,
                                        const std::vector<int>& shape, double eta,
                                        const SelftestOptions& opt) {
    const SeedMaterial sm =
        derive_seed_with_domain(Password(password), "noise-flip", opt.seed_domain());
    return generate_flip_mask(sm, shape, eta).digest_hex();
}

struct DepthSweepRow {
    int depth;
    double max_abs_err;
    double mean_abs_err;
};

// Scheduler round-trip error as a function of inversion depth, measured with
// the latent-coupled affine toy denoiser (the coupling is what accumulates
// float drift; conditioning-field denoisers would show pure rounding noise).
// mean_abs_err is the monotonicity statistic: max_abs_err is quantized to
// float32 ulps and can dip by one quantum between shallow depths, while the
// mean integrates over all elements and grows smoothly.
inline std::vector<DepthSweepRow> depth_sweep(int steps = 50, double p = 0.93,
                                              const std::string& toy_id = "toy:affine:0.1") {
    ToyBackend toy(toy_id);
    Conditioning cond;
    cond.text_embedding = toy.embed_text("depth sweep");
    NoisePredictor pred = make_predictor(toy);
    const NoiseSchedule sched = build_schedule(steps);
    DigestWriter w;
    w.str("depth-sweep-latent");
    SeedMaterial sm{w.finish(), "selftest"};
    const Tensor z = generate_gaussian(sm, {3, 32, 32});

    std::vector<DepthSweepRow> rows;
    rows.reserve(static_cast<size_t>(steps));
    for (int depth = 1; depth <= steps; ++depth) {
        CoupledPair pair = CoupledPair::from_latent(z);
        EdictParams params{p, static_cast<double>(depth) / steps};
        invert_to_depth(pair, sched, depth, params, cond, pred);
        denoise_from_depth(pair, sched, depth, params, cond, pred);
        rows.push_back({depth, static_cast<double>(max_abs_diff(pair.x, z)),
                        mean_abs_diff(pair.x, z)});
    }
    return rows;
}

}  // namespace stegakit
