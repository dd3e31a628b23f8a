#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "stegakit/refgen.hpp"
#include "stegakit/toy_backend.hpp"

using namespace stegakit;

namespace {

RefOptions small_opts(const std::string& prompt) {
    RefOptions o;
    o.prompt2 = prompt;
    o.height = 16;
    o.width = 16;
    return o;
}

}  // namespace

TEST_CASE("reference generation is a pure function of password and prompt", "[refgen]") {
    ToyBackend model("toy:net/ref");
    const RefOptions opt = small_opts("a red lighthouse");
    const Image a = generate_reference(model, Password("key-one"), opt);
    const Image b = generate_reference(model, Password("key-one"), opt);
    CHECK(a.data == b.data);
    CHECK(image_digest_hex(a) == image_digest_hex(b));

    const Image c = generate_reference(model, Password("key-two"), opt);
    CHECK(image_digest_hex(a) != image_digest_hex(c));
    const Image d = generate_reference(model, Password("key-one"), small_opts("a blue harbor"));
    CHECK(image_digest_hex(a) != image_digest_hex(d));
}

TEST_CASE("password avalanche reaches almost every pixel", "[refgen]") {
    ToyBackend model("toy:net/ref");
    const RefOptions opt = small_opts("a red lighthouse");
    const Image a = generate_reference(model, Password("key-one"), opt);
    const Image b = generate_reference(model, Password("key-onf"), opt);
    size_t differing = 0;
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) ++differing;
    CHECK(static_cast<double>(differing) / static_cast<double>(a.size()) > 0.99);
}

TEST_CASE("twenty wrong passwords give twenty distinct references", "[refgen]") {
    ToyBackend model("toy:net/ref");
    const RefOptions opt = small_opts("a quiet harbor");
    std::set<std::string> digests;
    digests.insert(image_digest_hex(generate_reference(model, Password("the-real-key"), opt)));
    for (int i = 0; i < 20; ++i)
        digests.insert(image_digest_hex(
            generate_reference(model, Password("guess-" + std::to_string(i)), opt)));
    CHECK(digests.size() == 21);
}

TEST_CASE("zero denoiser yields the scaled initial gaussian", "[refgen]") {
    ToyBackend model("toy:zero");
    RefOptions opt = small_opts("ignored prompt");
    opt.steps = 50;
    const Password pw("closed-form-key");
    const Image ref = generate_reference(model, pw, opt);

    const NoiseSchedule sched = build_schedule(opt.steps);
    const double scale = sched.a_product(sched.steps);
    const Tensor z =
        generate_gaussian(derive_seed(pw, "refgen-init"), model.latent_shape(16, 16));
    REQUIRE(ref.size() == z.size());
    for (size_t i = 0; i < z.size(); ++i)
        CHECK(ref[i] == Catch::Approx(z[i] * scale).epsilon(1e-5).margin(1e-6));
}

TEST_CASE("refgen rejects bad options", "[refgen]") {
    ToyBackend model("toy:net/ref");
    RefOptions opt = small_opts("");
    CHECK_THROWS(generate_reference(model, Password("k"), opt));
    opt.prompt2 = "ok";
    opt.steps = 0;
    CHECK_THROWS(generate_reference(model, Password("k"), opt));
}

TEST_CASE("control conditioning changes the reference", "[refgen]") {
    ToyBackend model("toy:net/ref");
    RefOptions plain = small_opts("a red lighthouse");
    RefOptions with_control = plain;
    DigestWriter w;
    w.str("control-map");
    const Tensor map = generate_gaussian(SeedMaterial{w.finish(), "noise-flip"}, {3, 16, 16});
    Conditioning::Control ctl;
    ctl.map = Image(map.shape, map.data);
    ctl.type = "seg";
    with_control.control = ctl;

    const Image a = generate_reference(model, Password("k"), plain);
    const Image b = generate_reference(model, Password("k"), with_control);
    CHECK(image_digest_hex(a) != image_digest_hex(b));

    Conditioning::Control pose = ctl;
    pose.type = "pose";
    with_control.control = pose;
    const Image c = generate_reference(model, Password("k"), with_control);
    CHECK(image_digest_hex(b) != image_digest_hex(c));  // control type enters the digest
}
