#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "stegakit/metrics.hpp"
#include "stegakit/pipeline.hpp"
#include "stegakit/selftest.hpp"

using namespace stegakit;

namespace {

struct Rig {
    StegoConfig cfg;
    BackendSet set;
    Rig() : set(make_backend_set(cfg)) {}
};

const std::string kPrompt = "a bright meadow at noon";

}  // namespace

TEST_CASE("config validation and depth", "[config]") {
    StegoConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.depth() == 30);  // round(0.6 * 50)

    StegoConfig bad = cfg;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    bad = cfg;
    bad.xi = 0.0;
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    bad = cfg;
    bad.eta = 1.1;
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    bad = cfg;
    bad.p = 0.0;
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    bad = cfg;
    bad.category = "portrait";
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    bad = cfg;
    bad.backend_kind = "cloud";
    CHECK_THROWS_AS(bad.validate(), PipelineError);

    CHECK(StegoConfig::default_xi_for("style") == 0.7);
    CHECK(StegoConfig::default_xi_for("content") == 0.6);
    CHECK(StegoConfig::default_xi_for("similar") == 0.6);
}

TEST_CASE("config hash tracks every protocol field", "[config]") {
    StegoConfig cfg;
    const std::string base = cfg.config_hash();
    CHECK(base == StegoConfig{}.config_hash());  // deterministic

    StegoConfig t = cfg;
    t.steps = 49;
    CHECK(t.config_hash() != base);
    t = cfg;
    t.xi = 0.61;
    CHECK(t.config_hash() != base);
    t = cfg;
    t.eta = 0.06;
    CHECK(t.config_hash() != base);
    t = cfg;
    t.p = 0.92;
    CHECK(t.config_hash() != base);
    t = cfg;
    t.model_b = "toy:net/bb";
    CHECK(t.config_hash() != base);
    t = cfg;
    t.prompt1 = "meaningful";
    CHECK(t.config_hash() != base);
}

TEST_CASE("round trip recovers the hidden image", "[pipeline]") {
    Rig rig;
    for (int i = 0; i < 3; ++i) {
        const Image ori = make_test_image(i);
        const Password pw("round-trip-key-" + std::to_string(i));
        const StegoResult enc = hide(ori, kPrompt, pw, std::nullopt, rig.cfg, rig.set);
        CHECK(enc.image.shape == ori.shape);
        CHECK(psnr(ori, enc.image) < 30.0);  // the stego image is not the original

        const StegoResult rec = recover(enc.image, kPrompt, pw, std::nullopt, rig.cfg, rig.set,
                                        enc.audit.ref_digest);
        CHECK(psnr(ori, rec.image) > 50.0);
    }
}

TEST_CASE("wrong key, no key, and wrong prompt all fail to recover", "[pipeline]") {
    Rig rig;
    const Image ori = make_test_image(9);
    const Password pw("the-correct-key");
    const StegoResult enc = hide(ori, kPrompt, pw, std::nullopt, rig.cfg, rig.set);
    const double correct =
        psnr(ori,
             recover(enc.image, kPrompt, pw, std::nullopt, rig.cfg, rig.set, enc.audit.ref_digest)
                 .image);
    REQUIRE(correct > 50.0);

    const double none =
        psnr(ori, attack_recover_no_password(enc.image, kPrompt, rig.cfg, rig.set).image);
    const double wrong =
        psnr(ori, attack_recover_wrong_password(enc.image, kPrompt, Password("a-wrong-key"),
                                                std::nullopt, rig.cfg, rig.set)
                      .image);
    const double bad_prompt =
        psnr(ori, recover(enc.image, "a different prompt entirely", pw, std::nullopt, rig.cfg,
                          rig.set)
                      .image);
    CHECK(correct - none > 20.0);
    CHECK(correct - wrong > 20.0);
    CHECK(correct - bad_prompt > 20.0);
}

TEST_CASE("hide and recover agree on every keyed artifact", "[pipeline]") {
    Rig rig;
    const Image ori = make_test_image(11);
    const Password pw("artifact-agreement");
    const StegoResult enc = hide(ori, kPrompt, pw, std::nullopt, rig.cfg, rig.set);
    const StegoResult rec = recover(enc.image, kPrompt, pw, std::nullopt, rig.cfg, rig.set);

    CHECK(enc.audit.mask_digest == rec.audit.mask_digest);
    CHECK(enc.audit.ref_digest == rec.audit.ref_digest);
    CHECK(enc.audit.config_hash == rec.audit.config_hash);
    CHECK(enc.audit.depth == rig.cfg.depth());
    CHECK(enc.audit.invert_calls == 2L * rig.cfg.depth());
    CHECK(enc.audit.denoise_calls == 2L * rig.cfg.depth());
    CHECK(rec.audit.trace == mirror_trace(enc.audit.trace));
    CHECK(mirror_trace(mirror_trace(enc.audit.trace)) == enc.audit.trace);
}

TEST_CASE("hide is bit-deterministic", "[pipeline]") {
    Rig rig;
    const Image ori = make_test_image(12);
    const Password pw("repeatable");
    const StegoResult a = hide(ori, kPrompt, pw, std::nullopt, rig.cfg, rig.set);
    const StegoResult b = hide(ori, kPrompt, pw, std::nullopt, rig.cfg, rig.set);
    CHECK(a.image.data == b.image.data);
    CHECK(a.audit.mask_digest == b.audit.mask_digest);
    CHECK(a.audit.ref_digest == b.audit.ref_digest);
}

TEST_CASE("reference digest mismatch fails fast", "[pipeline]") {
    Rig rig;
    const Image ori = make_test_image(13);
    const Password pw("digest-check");
    const StegoResult enc = hide(ori, kPrompt, pw, std::nullopt, rig.cfg, rig.set);
    CHECK_THROWS_WITH(
        recover(enc.image, kPrompt, pw, std::nullopt, rig.cfg, rig.set, std::string(64, '0')),
        Catch::Matchers::ContainsSubstring("reference"));
}

TEST_CASE("transport-pair mode round-trips and demands both members", "[pipeline]") {
    StegoConfig cfg;
    cfg.transport_pair = true;
    BackendSet set = make_backend_set(cfg);
    const Image ori = make_test_image(14);
    const Password pw("pair-transport");

    const StegoResult enc = hide(ori, kPrompt, pw, std::nullopt, cfg, set);
    REQUIRE(enc.pair_second.has_value());
    const StegoResult rec = recover(enc.image, kPrompt, pw, std::nullopt, cfg, set, std::nullopt,
                                    enc.pair_second);
    CHECK(psnr(ori, rec.image) > 50.0);
    CHECK_THROWS_AS(recover(enc.image, kPrompt, pw, std::nullopt, cfg, set), PipelineError);
}

TEST_CASE("research knobs change the stego image but keep recovery exact", "[pipeline]") {
    const Image ori = make_test_image(15);
    const Password pw("research-knobs");
    StegoConfig base;
    BackendSet base_set = make_backend_set(base);
    const StegoResult plain = hide(ori, kPrompt, pw, std::nullopt, base, base_set);

    StegoConfig with_p1 = base;
    with_p1.prompt1 = "a meaningful first prompt";
    BackendSet p1_set = make_backend_set(with_p1);
    const StegoResult alt = hide(ori, kPrompt, pw, std::nullopt, with_p1, p1_set);
    CHECK(alt.image.data != plain.image.data);
    CHECK(psnr(ori, recover(alt.image, kPrompt, pw, std::nullopt, with_p1, p1_set).image) > 50.0);
}

TEST_CASE("pipeline inputs are validated", "[pipeline]") {
    Rig rig;
    const Image ori = make_test_image(16);
    const Password pw("validation");
    CHECK_THROWS_AS(hide(ori, "", pw, std::nullopt, rig.cfg, rig.set), PipelineError);
    const Image bad_shape({1, 64, 64}, std::vector<float>(64 * 64, 0.5f));
    CHECK_THROWS_AS(hide(bad_shape, kPrompt, pw, std::nullopt, rig.cfg, rig.set), PipelineError);
}

TEST_CASE("no password bytes reach pipeline outputs", "[hygiene]") {
    Rig rig;
    const Image ori = make_test_image(17);
    const std::string secret = "zq9-ultra-secret-passphrase-zq9";
    const StegoResult enc = hide(ori, kPrompt, Password(secret), std::nullopt, rig.cfg, rig.set);

    const std::string image_bytes(reinterpret_cast<const char*>(enc.image.data.data()),
                                  enc.image.data.size() * sizeof(float));
    CHECK(image_bytes.find(secret) == std::string::npos);

    std::string audit_text = enc.audit.config_hash + enc.audit.mask_digest + enc.audit.ref_digest;
    for (const auto& stage : enc.audit.trace) audit_text += stage;
    CHECK(audit_text.find(secret) == std::string::npos);
}

TEST_CASE("distinct passwords give distinct stego images", "[pipeline]") {
    Rig rig;
    const Image ori = make_test_image(18);
    std::set<std::string> digests;
    for (int i = 0; i < 5; ++i) {
        const StegoResult enc =
            hide(ori, kPrompt, Password("key-" + std::to_string(i)), std::nullopt, rig.cfg,
                 rig.set);
        digests.insert(image_digest_hex(enc.image));
    }
    CHECK(digests.size() == 5);
}
