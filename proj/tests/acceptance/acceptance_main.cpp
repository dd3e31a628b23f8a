// Desk-scale acceptance gate. Runs every criterion on the toy analytic
// backend (identity autoencoder, 64x64 synthetic fixtures) and prints exactly
// one PASS/FAIL/SKIPPED line per criterion. Full-scale criteria 8 and 9 need
// pretrained weights and are skipped unless STEGA_MODEL_DIR points at them.

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stegakit/evalkit.hpp"
#include "stegakit/refgen.hpp"
#include "stegakit/selftest.hpp"

using namespace stegakit;

namespace {

constexpr const char* kCli = STEGAKIT_CLI_PATH;

struct Criterion {
    int id;
    bool pass = false;
    bool skipped = false;
    std::string title;
    std::string detail;
};

void print_line(const Criterion& c) {
    const char* verdict = c.skipped ? "SKIPPED" : (c.pass ? "PASS" : "FAIL");
    std::printf("criterion %d [%s] %s — %s\n", c.id, verdict, c.title.c_str(),
                c.detail.c_str());
}

std::string run_child(const std::string& args) {
    const std::string cmd = std::string("'") + kCli + "' " + args + " 2>/dev/null";
    std::string out;
    if (FILE* pipe = popen(cmd.c_str(), "r")) {
        char buf[512];
        while (fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
        pclose(pipe);
    }
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out;
}

SeedMaterial case_seed(const std::string& tag, int i) {
    DigestWriter w;
    w.str("acceptance");
    w.str(tag);
    w.i32(i);
    return SeedMaterial{w.finish(), "noise-flip"};
}

// 1. Noise Flip involution: double flip bit-identical, 100 cases.
Criterion criterion_involution() {
    Criterion c{1};
    c.title = "noise-flip involution, 100 random (tensor, password, eta) cases";
    const double etas[] = {0.01, 0.05, 0.5, 1.0};
    int good = 0;
    for (int i = 0; i < 100; ++i) {
        const SeedMaterial key =
            derive_seed(Password("involution-pw-" + std::to_string(i)), "noise-flip");
        const Tensor x = generate_gaussian(case_seed("involution", i), {4, 16, 16});
        const FlipMask m = generate_flip_mask(key, x.shape, etas[i % 4]);
        if (noise_flip(noise_flip(x, m), m).data == x.data) ++good;
    }
    c.pass = good == 100;
    c.detail = std::to_string(good) + "/100 bit-identical (require 100/100)";
    return c;
}

// 2. Mask budget exact + cross-process byte-identical masks.
Criterion criterion_mask_budget() {
    Criterion c{2};
    c.title = "mask budget == floor(eta*N) on 50 cases; cross-process identical masks";
    int good = 0;
    for (int i = 0; i < 50; ++i) {
        PhiloxSequence seq(case_seed("budget", i).philox_key());
        const std::vector<int> shape = {static_cast<int>(1 + seq.next_below(6)),
                                        static_cast<int>(1 + seq.next_below(64)),
                                        static_cast<int>(1 + seq.next_below(64))};
        const double eta = seq.next_below(10001) / 10000.0;
        const SeedMaterial key =
            derive_seed(Password("budget-pw-" + std::to_string(i)), "noise-flip");
        const FlipMask m = generate_flip_mask(key, shape, eta);
        const auto want = static_cast<size_t>(
            std::floor(eta * static_cast<double>(shape_numel(shape))));
        if (m.popcount() == want) ++good;
    }

    const std::string probe_pw = "acceptance-cross-process";
    const std::string local =
        selftest_mask_digest(probe_pw, {4, 64, 64}, 0.05, SelftestOptions{});
    std::string saved;
    const bool had = std::getenv("STEGA_PASSWORD") != nullptr;
    if (had) saved = std::getenv("STEGA_PASSWORD");
    setenv("STEGA_PASSWORD", probe_pw.c_str(), 1);
    const std::string child = run_child("selftest --emit-mask-digest --eta 0.05");
    if (had)
        setenv("STEGA_PASSWORD", saved.c_str(), 1);
    else
        unsetenv("STEGA_PASSWORD");

    const bool cross = !child.empty() && child == local;
    c.pass = good == 50 && cross;
    std::ostringstream os;
    os << good << "/50 budgets exact; cross-process mask digest "
       << (cross ? "identical" : "MISMATCH");
    c.detail = os.str();
    return c;
}

// 3. Coupled-transform exactness over the feasible grid.
Criterion criterion_coupled_exactness() {
    Criterion c{3};
    c.title = "coupled transform exactness, eps x xi x p grid, max-abs < 1e-4";
    const NoiseSchedule sched = build_schedule(50);
    double worst = 0.0;
    int run = 0, excluded = 0;
    for (const ExactnessCase& cs : coupled_exactness_cases()) {
        if (!cs.included) {
            ++excluded;
            continue;
        }
        worst = std::max(worst, exactness_case_error(cs, sched));
        ++run;
    }
    c.pass = run == 25 && excluded == 2 && worst < 1e-4;
    std::ostringstream os;
    os << "worst " << worst << " over " << run
       << " cells; excluded " << excluded
       << " latent-coupled p=0.5 deep cells (unmix gain 4x/step exceeds float32)";
    c.detail = os.str();
    return c;
}

struct FixtureRun {
    double correct = 0.0;
    double none = 0.0;
    double wrong = 0.0;
};

std::vector<FixtureRun> protocol_runs(int fixtures) {
    StegoConfig cfg;  // defaults: T=50, xi=0.6, eta=0.05, p=0.93
    BackendSet set = make_backend_set(cfg);
    std::vector<FixtureRun> out;
    for (int i = 0; i < fixtures; ++i) {
        const Image ori = make_test_image(i);
        const Password pw("fixture-key-" + std::to_string(i));
        const StegoResult enc = hide(ori, "a bright meadow", pw, std::nullopt, cfg, set);
        FixtureRun r;
        r.correct = psnr(ori, recover(enc.image, "a bright meadow", pw, std::nullopt, cfg, set,
                                      enc.audit.ref_digest)
                                  .image);
        r.none = psnr(ori,
                      attack_recover_no_password(enc.image, "a bright meadow", cfg, set).image);
        r.wrong = psnr(ori, attack_recover_wrong_password(
                                enc.image, "a bright meadow",
                                Password("fixture-wrong-" + std::to_string(i)), std::nullopt,
                                cfg, set)
                                .image);
        out.push_back(r);
    }
    return out;
}

// 4. Protocol round trip > 50 dB on 10 fixtures.
Criterion criterion_round_trip(const std::vector<FixtureRun>& runs) {
    Criterion c{4};
    c.title = "protocol round trip PSNR > 50 dB on 10 fixtures (defaults)";
    double worst = 1e9;
    for (const auto& r : runs) worst = std::min(worst, r.correct);
    c.pass = runs.size() == 10 && worst > 50.0;
    std::ostringstream os;
    os << "min recovery PSNR " << worst << " dB (require > 50)";
    c.detail = os.str();
    return c;
}

// 5. Key sensitivity margins + distinct reference digests.
Criterion criterion_key_sensitivity(const std::vector<FixtureRun>& runs) {
    Criterion c{5};
    c.title = "key sensitivity: mean margins > 20 dB; 10/10 distinct wrong-key references";
    double correct = 0.0, none = 0.0, wrong = 0.0;
    for (const auto& r : runs) {
        correct += r.correct;
        none += r.none;
        wrong += r.wrong;
    }
    const double n = static_cast<double>(runs.size());
    correct /= n;
    none /= n;
    wrong /= n;

    ToyBackend ref_model("toy:net/ref");
    RefOptions opt;
    opt.prompt2 = "a bright meadow";
    opt.height = 64;
    opt.width = 64;
    std::set<std::string> digests;
    for (int i = 0; i < 10; ++i)
        digests.insert(image_digest_hex(
            generate_reference(ref_model, Password("wrong-key-" + std::to_string(i)), opt)));

    c.pass = (correct - wrong > 20.0) && (correct - none > 20.0) && digests.size() == 10;
    std::ostringstream os;
    os << "mean correct " << correct << " dB vs wrong " << wrong << " / none " << none
       << " dB; " << digests.size() << "/10 distinct reference digests";
    c.detail = os.str();
    return c;
}

// 6. Metric sanity anchors.
Criterion criterion_metric_sanity() {
    Criterion c{6};
    c.title = "metric sanity: 0 dB, 100 dB cap, 48.131 dB, SSIM 1.0, symmetry <= 1e-9";
    const Image a = make_test_image(31);
    const Image b = make_test_image(32);
    const Image zeros({3, 32, 32}, std::vector<float>(3 * 32 * 32, 0.0f));
    const Image ones({3, 32, 32}, std::vector<float>(3 * 32 * 32, 1.0f));
    Image step = zeros;
    for (auto& v : step.data) v += 1.0f / 255.0f;

    const bool cap = psnr(a, a) == 100.0;
    const bool zero_db = std::abs(psnr(zeros, ones)) < 1e-9;
    const bool one_lsb = std::abs(psnr(zeros, step) - 48.1308) < 1e-3;
    const bool ssim_id = std::abs(ssim(a, a) - 1.0) < 1e-12;
    const bool sym = std::abs(psnr(a, b) - psnr(b, a)) <= 1e-9 &&
                     std::abs(ssim(a, b) - ssim(b, a)) <= 1e-9;
    c.pass = cap && zero_db && one_lsb && ssim_id && sym;
    std::ostringstream os;
    os << "cap " << (cap ? "ok" : "BAD") << ", 0dB " << (zero_db ? "ok" : "BAD") << ", 48.131dB "
       << (one_lsb ? "ok" : "BAD") << ", ssim-identity " << (ssim_id ? "ok" : "BAD")
       << ", symmetry " << (sym ? "ok" : "BAD");
    c.detail = os.str();
    return c;
}

// 7. Drift curve non-decreasing; CSV emitted by the CLI.
Criterion criterion_drift() {
    Criterion c{7};
    c.title = "drift vs depth non-decreasing (mean-abs); CSV via selftest --depth-sweep";
    const std::vector<DepthSweepRow> rows = depth_sweep(50, 0.93, "toy:affine:0.1");
    int violations = 0;
    for (size_t i = 1; i < rows.size(); ++i)
        if (rows[i].mean_abs_err < rows[i - 1].mean_abs_err) ++violations;

    const std::string csv_path =
        (std::filesystem::temp_directory_path() / "stegakit-acceptance-sweep.csv").string();
    run_child("selftest --depth-sweep " + csv_path);
    bool csv_ok = false;
    std::ifstream csv(csv_path);
    if (csv) {
        std::string header;
        std::getline(csv, header);
        int count = 0;
        for (std::string line; std::getline(csv, line);)
            if (!line.empty()) ++count;
        csv_ok = header == "depth,max_abs_err,mean_abs_err" && count == 50;
    }
    std::filesystem::remove(csv_path);

    c.pass = rows.size() == 50 && violations == 0 && csv_ok;
    std::ostringstream os;
    os << violations << " monotonicity violations over depths 1..50 (mean-abs statistic; "
       << "max-abs is ulp-quantized and reported in the CSV); CLI CSV "
       << (csv_ok ? "ok" : "BAD");
    c.detail = os.str();
    return c;
}

// 8 & 9. Full-scale criteria need pretrained weights (and realistically a
// GPU); they are not part of the desk-scale gate.
Criterion criterion_full_scale(int id, const std::string& title) {
    Criterion c{id};
    c.title = title;
    const char* dir = std::getenv("STEGA_MODEL_DIR");
    if (dir == nullptr || *dir == '\0') {
        c.skipped = true;
        c.detail = "set STEGA_MODEL_DIR to a pretrained weight directory to enable";
        return c;
    }
    const char* manifest = std::getenv("STEGA_FULL_MANIFEST");
    if (manifest == nullptr || *manifest == '\0') {
        c.skipped = true;
        c.detail = "set STEGA_FULL_MANIFEST to a >=20-image manifest to enable";
        return c;
    }
    try {
        StegoConfig cfg;
        cfg.backend_kind = "pretrained";
        cfg.model_dir = dir;
        cfg.model_a = "sd15";
        cfg.model_b = "picx";
        cfg.refgen_model = "picx";
        const Password pw(std::getenv("STEGA_PASSWORD") ? std::getenv("STEGA_PASSWORD")
                                                        : "full-scale-probe");
        EvalOptions opt;
        if (id == 9) opt.degradations = {"none", "gaussian_blur", "jpeg"};
        const MetricReport report =
            evaluate(parse_manifest(manifest), cfg, pw, opt);
        const auto& clean = report.aggregate.at("none");
        const double correct = clean.at("correct").at("psnr");
        const double encrypted = clean.at("encrypted").at("psnr");
        const double wrong = clean.at("wrong").at("psnr");
        std::ostringstream os;
        if (id == 8) {
            c.pass = std::abs(correct - 23.3) <= 2.0 && std::abs(encrypted - 18.6) <= 2.5 &&
                     (correct - wrong) >= 4.0;
            os << "correct " << correct << " dB (23.3±2.0), encrypted " << encrypted
               << " dB (18.6±2.5), wrong " << wrong << " dB (>=4 below correct)";
        } else {
            const double blur = report.aggregate.at("gaussian_blur").at("correct").at("psnr");
            const double jpeg = report.aggregate.at("jpeg").at("correct").at("psnr");
            c.pass = std::abs((correct - blur) - (23.290 - 20.849)) <= 3.0 &&
                     std::abs((correct - jpeg) - (23.290 - 21.161)) <= 3.0;
            os << "clean " << correct << " dB, blur " << blur << " dB, jpeg " << jpeg
               << " dB (gaps within 3 dB of reference)";
        }
        c.detail = os.str();
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = std::string("full-scale run failed: ") + e.what();
    }
    return c;
}

}  // namespace

int main() {
    std::vector<Criterion> results;
    results.push_back(criterion_involution());
    results.push_back(criterion_mask_budget());
    results.push_back(criterion_coupled_exactness());
    const std::vector<FixtureRun> runs = protocol_runs(10);
    results.push_back(criterion_round_trip(runs));
    results.push_back(criterion_key_sensitivity(runs));
    results.push_back(criterion_metric_sanity());
    results.push_back(criterion_drift());
    results.push_back(criterion_full_scale(
        8, "full-scale Table-1 trends on a >=20-image manifest (pretrained weights)"));
    results.push_back(criterion_full_scale(
        9, "full-scale robustness after blur k=7 sigma=10 and JPEG Q=40 (pretrained weights)"));

    bool all = true;
    for (const auto& c : results) {
        print_line(c);
        if (!c.skipped && !c.pass) all = false;
    }
    std::printf("acceptance: %s\n", all ? "PASS" : "FAIL");
    return all ? 0 : 1;
}
