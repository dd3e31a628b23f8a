#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "stegakit/imageio.hpp"
#include "stegakit/metrics.hpp"
#include "stegakit/selftest.hpp"

using namespace stegakit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCli = STEGAKIT_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string output;
};

// Runs the CLI with stdin closed. The password travels via the inherited
// environment, never through the command line.
RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string("'") + kCli + "' " + args + " </dev/null 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[512];
    while (fgets(buf, sizeof buf, pipe) != nullptr) r.output += buf;
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct CliFixture {
    fs::path dir;
    std::string ori;

    CliFixture() {
        fs::path p = fs::temp_directory_path() / "stegakit-cli-XXXXXX";
        std::string tmpl = p.string();
        REQUIRE(mkdtemp(tmpl.data()) != nullptr);
        dir = fs::path(tmpl);
        ori = (dir / "ori.pfm").string();
        save_image(ori, make_test_image(21));
    }
    ~CliFixture() {
        unsetenv("STEGA_PASSWORD");
        unsetenv("STEGA_WRONG_PASSWORD");
        fs::remove_all(dir);
    }

    std::string path(const std::string& name) const { return (dir / name).string(); }
};

bool file_contains(const std::string& path, const std::string& needle) {
    std::ifstream in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return bytes.find(needle) != std::string::npos;
}

const std::string kSecret = "zq7-cli-secret-phrase-zq7";

}  // namespace

TEST_CASE("cli requires a password channel", "[cli]") {
    CliFixture fx;
    unsetenv("STEGA_PASSWORD");
    const RunResult r = run_cli("hide --in " + fx.ori + " --prompt2 'a meadow' --out " +
                                fx.path("s.pfm"));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("STEGA_PASSWORD") != std::string::npos);
}

TEST_CASE("cli usage errors exit 2", "[cli]") {
    CHECK(run_cli("hide --no-such-flag").exit_code == 2);
    CHECK(run_cli("frobnicate").exit_code == 2);
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("attack --mode sideways --in /dev/null --prompt2 x").exit_code == 2);
}

TEST_CASE("hide then recover via metadata round-trips", "[cli]") {
    CliFixture fx;
    setenv("STEGA_PASSWORD", kSecret.c_str(), 1);

    const RunResult h = run_cli("hide --in " + fx.ori + " --prompt2 'a bright meadow' --out " +
                                fx.path("stego.pfm") + " --audit " + fx.path("audit.json"));
    REQUIRE(h.exit_code == 0);
    REQUIRE(fs::exists(fx.path("stego.pfm")));
    REQUIRE(fs::exists(fx.path("stego.pfm.meta.json")));
    REQUIRE(fs::exists(fx.path("audit.json")));

    const RunResult r = run_cli("recover --in " + fx.path("stego.pfm") + " --meta " +
                                fx.path("stego.pfm.meta.json") + " --out " + fx.path("rec.pfm"));
    REQUIRE(r.exit_code == 0);
    const Image ori = load_image(fx.ori);
    CHECK(psnr(ori, load_image(fx.path("rec.pfm"))) > 50.0);

    // Attacks stay far from the original.
    const RunResult an = run_cli("attack --mode none --in " + fx.path("stego.pfm") + " --meta " +
                                 fx.path("stego.pfm.meta.json") + " --out " + fx.path("an.pfm"));
    REQUIRE(an.exit_code == 0);
    CHECK(psnr(ori, load_image(fx.path("an.pfm"))) < 30.0);

    setenv("STEGA_WRONG_PASSWORD", "not-the-right-key", 1);
    const RunResult aw = run_cli("attack --mode wrong --in " + fx.path("stego.pfm") + " --meta " +
                                 fx.path("stego.pfm.meta.json") + " --out " + fx.path("aw.pfm"));
    REQUIRE(aw.exit_code == 0);
    CHECK(psnr(ori, load_image(fx.path("aw.pfm"))) < 30.0);
}

TEST_CASE("attack mode wrong needs its own password channel", "[cli]") {
    CliFixture fx;
    setenv("STEGA_PASSWORD", kSecret.c_str(), 1);
    REQUIRE(run_cli("hide --in " + fx.ori + " --prompt2 'p q' --out " + fx.path("s.pfm"))
                .exit_code == 0);
    unsetenv("STEGA_WRONG_PASSWORD");
    const RunResult r = run_cli("attack --mode wrong --in " + fx.path("s.pfm") + " --meta " +
                                fx.path("s.pfm.meta.json") + " --out " + fx.path("a.pfm"));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("STEGA_WRONG_PASSWORD") != std::string::npos);
}

TEST_CASE("metadata reflects overrides and hides secrets", "[cli]") {
    CliFixture fx;
    setenv("STEGA_PASSWORD", kSecret.c_str(), 1);

    REQUIRE(run_cli("hide --in " + fx.ori + " --prompt2 'style piece' --category style --out " +
                    fx.path("st.pfm") + " --audit " + fx.path("st-audit.json"))
                .exit_code == 0);
    json meta;
    std::ifstream(fx.path("st.pfm.meta.json")) >> meta;
    CHECK(meta["config"]["category"] == "style");
    CHECK(meta["config"]["xi"] == 0.7);  // category default applied
    CHECK(meta["prompt2"] == "style piece");

    REQUIRE(run_cli("hide --in " + fx.ori + " --prompt2 'style piece' --category style "
                    "--xi 0.45 --out " +
                    fx.path("sx.pfm"))
                .exit_code == 0);
    json meta2;
    std::ifstream(fx.path("sx.pfm.meta.json")) >> meta2;
    CHECK(meta2["config"]["xi"] == 0.45);  // explicit flag wins

    // No password bytes in any produced artifact; no key-correlated digests
    // in the public metadata.
    for (const std::string name :
         {"st.pfm", "st.pfm.meta.json", "sx.pfm", "sx.pfm.meta.json"}) {
        CAPTURE(name);
        CHECK_FALSE(file_contains(fx.path(name), kSecret));
    }
    json audit;
    std::ifstream(fx.path("st-audit.json")) >> audit;
    const std::string mask_digest = audit["mask_digest"];
    const std::string ref_digest = audit["ref_digest"];
    CHECK_FALSE(file_contains(fx.path("st.pfm.meta.json"), mask_digest));
    CHECK_FALSE(file_contains(fx.path("st.pfm.meta.json"), ref_digest));
    CHECK_FALSE(file_contains(fx.path("st-audit.json"), kSecret));
}

TEST_CASE("config file loads and flags override it", "[cli]") {
    CliFixture fx;
    setenv("STEGA_PASSWORD", kSecret.c_str(), 1);
    std::ofstream(fx.path("cfg.json")) << R"({"steps": 40, "eta": 0.1})";

    REQUIRE(run_cli("hide --in " + fx.ori + " --prompt2 'p' --config " + fx.path("cfg.json") +
                    " --eta 0.2 --out " + fx.path("c.pfm"))
                .exit_code == 0);
    json meta;
    std::ifstream(fx.path("c.pfm.meta.json")) >> meta;
    CHECK(meta["config"]["steps"] == 40);
    CHECK(meta["config"]["eta"] == 0.2);  // flag beats file

    std::ofstream(fx.path("bad.json")) << R"({"stepz": 40})";
    CHECK(run_cli("hide --in " + fx.ori + " --prompt2 'p' --config " + fx.path("bad.json") +
                  " --out " + fx.path("d.pfm"))
              .exit_code == 2);
}

TEST_CASE("jpeg stego output requires explicit opt-in", "[cli]") {
    CliFixture fx;
    setenv("STEGA_PASSWORD", kSecret.c_str(), 1);
    CHECK(run_cli("hide --in " + fx.ori + " --prompt2 'p' --out " + fx.path("s.jpg"))
              .exit_code == 2);
    CHECK(run_cli("hide --in " + fx.ori + " --prompt2 'p' --out " + fx.path("s.jpg") +
                  " --jpeg-quality 90")
              .exit_code == 0);
}

TEST_CASE("selftest subcommand and depth sweep", "[cli]") {
    CliFixture fx;
    const RunResult sweep = run_cli("selftest --depth-sweep " + fx.path("sweep.csv"));
    REQUIRE(sweep.exit_code == 0);
    std::ifstream csv(fx.path("sweep.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "depth,max_abs_err,mean_abs_err");
    int rows = 0;
    for (std::string line; std::getline(csv, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == 50);

    setenv("STEGA_PASSWORD", "digest-probe-key", 1);
    const RunResult digest = run_cli("selftest --emit-mask-digest");
    REQUIRE(digest.exit_code == 0);
    std::string line = digest.output;
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    CHECK(line.size() == 64);
    CHECK(line.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(run_cli("selftest --emit-mask-digest").output == digest.output);
}

TEST_CASE("refgen warns that the output is secret", "[cli]") {
    CliFixture fx;
    setenv("STEGA_PASSWORD", kSecret.c_str(), 1);
    const RunResult r = run_cli("refgen --prompt2 'a lighthouse' --height 32 --width 32 --out " +
                                fx.path("ref.png"));
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(fx.path("ref.png")));
    CHECK(r.output.find("secret") != std::string::npos);
    CHECK_FALSE(file_contains(fx.path("ref.png"), kSecret));
}

TEST_CASE("evaluate command writes both reports", "[cli]") {
    CliFixture fx;
    setenv("STEGA_PASSWORD", kSecret.c_str(), 1);
    {
        std::ofstream m(fx.path("manifest.jsonl"));
        m << json{{"image_path", fx.ori}, {"prompt2", "fixture"}} << "\n";
    }
    const RunResult r = run_cli("evaluate --manifest " + fx.path("manifest.jsonl") +
                                " --report-json " + fx.path("r.json") + " --report-csv " +
                                fx.path("r.csv"));
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(fx.path("r.json")));
    REQUIRE(fs::exists(fx.path("r.csv")));
    CHECK_FALSE(file_contains(fx.path("r.json"), kSecret));
    CHECK_FALSE(file_contains(fx.path("r.csv"), kSecret));

    json report;
    std::ifstream(fx.path("r.json")) >> report;
    CHECK(report["items_total"] == 1);
    CHECK(report["failures"] == 0);
    CHECK(report["aggregate"]["none"]["correct"]["psnr"].get<double>() > 50.0);
}
