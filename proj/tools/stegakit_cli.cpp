// stegakit command-line front end: hide / recover / attack / refgen /
// evaluate / selftest.
//
// The password never travels through argv. It is read from STEGA_PASSWORD
// (STEGA_WRONG_PASSWORD for the wrong-key attack probe) or, when stdin is a
// terminal, from a no-echo prompt. Public artifacts (stego image, metadata
// JSON, reports, stdout) are scanned before writing to guarantee no password
// bytes leak; key-correlated digests live only in the optional --audit file.

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__unix__) || defined(__APPLE__)
#include <termios.h>
#endif

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stegakit/evalkit.hpp"
#include "stegakit/refgen.hpp"
#include "stegakit/selftest.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using namespace stegakit;

// Usage-level problems (bad flags, missing password channel) exit 2; runtime
// failures exit 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::optional<std::string> env_value(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

std::optional<std::string> prompt_secret(const std::string& label) {
#if defined(__unix__) || defined(__APPLE__)
    if (!isatty(fileno(stdin)) || !isatty(fileno(stderr))) return std::nullopt;
    std::fprintf(stderr, "%s: ", label.c_str());
    std::fflush(stderr);
    termios before{};
    tcgetattr(fileno(stdin), &before);
    termios quiet = before;
    quiet.c_lflag &= ~static_cast<tcflag_t>(ECHO);
    tcsetattr(fileno(stdin), TCSANOW, &quiet);
    std::string line;
    const bool got = static_cast<bool>(std::getline(std::cin, line));
    tcsetattr(fileno(stdin), TCSANOW, &before);
    std::fprintf(stderr, "\n");
    if (!got) return std::nullopt;
    return line;
#else
    (void)label;
    return std::nullopt;
#endif
}

Password require_password(const char* env_name, const std::string& label) {
    if (auto v = env_value(env_name)) return Password(std::move(*v));
    if (auto v = prompt_secret(label)) {
        if (!v->empty()) return Password(std::move(*v));
    }
    throw UsageError(std::string("password required: set ") + env_name +
                     " or run interactively");
}

// ---------------------------------------------------------------------------
// Shared protocol flags: every StegoConfig field, overriding --config values.

struct ProtoFlags {
    std::string config_path;
    int steps = 50;
    double xi = 0.6;
    double eta = 0.05;
    double mix = 0.93;
    double ip_weight = 1.0;
    double guidance = 1.0;
    std::string backend = "toy";
    std::string model_a;
    std::string model_b;
    std::string refgen_model;
    std::string model_dir;
    std::string category = "content";
    std::string prompt1;
    bool control_in_stego = false;
    bool transport_pair = false;
    bool allow_nondet = false;
    std::string control_path;
    std::string control_type;

    CLI::Option* o_steps = nullptr;
    CLI::Option* o_xi = nullptr;
    CLI::Option* o_eta = nullptr;
    CLI::Option* o_mix = nullptr;
    CLI::Option* o_ip = nullptr;
    CLI::Option* o_guidance = nullptr;
    CLI::Option* o_backend = nullptr;
    CLI::Option* o_model_a = nullptr;
    CLI::Option* o_model_b = nullptr;
    CLI::Option* o_refgen = nullptr;
    CLI::Option* o_model_dir = nullptr;
    CLI::Option* o_category = nullptr;
    CLI::Option* o_prompt1 = nullptr;
    CLI::Option* o_cis = nullptr;
    CLI::Option* o_pair = nullptr;
    CLI::Option* o_nondet = nullptr;
};

void add_proto_flags(CLI::App* cmd, ProtoFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file; flags override it")
        ->check(CLI::ExistingFile);
    f.o_backend = cmd->add_option("--backend", f.backend, "Backend kind: toy | pretrained");
    f.o_model_a = cmd->add_option("--model-a", f.model_a, "Null-text side model id");
    f.o_model_b = cmd->add_option("--model-b", f.model_b, "Prompt-2 side model id");
    f.o_refgen = cmd->add_option("--refgen-model", f.refgen_model, "Reference generator model id");
    f.o_model_dir = cmd->add_option("--model-dir", f.model_dir, "Weight directory (pretrained)");
    f.o_steps = cmd->add_option("--steps", f.steps, "Diffusion steps T");
    f.o_xi = cmd->add_option("--xi", f.xi, "Depth fraction (default per --category)");
    f.o_eta = cmd->add_option("--eta", f.eta, "Noise-flip budget");
    f.o_mix = cmd->add_option("--mix", f.mix, "Coupled mixing coefficient p");
    f.o_ip = cmd->add_option("--ip-weight", f.ip_weight, "Image-prompt weight");
    f.o_guidance = cmd->add_option("--guidance", f.guidance, "Classifier-free guidance scale");
    f.o_category = cmd->add_option("--category", f.category, "content | style | similar");
    f.o_prompt1 = cmd->add_option("--prompt1", f.prompt1,
                                  "Research: non-null prompt 1 (weakens security)");
    f.o_cis = cmd->add_flag("--control-in-stego", f.control_in_stego,
                            "Research: attach control to the stego diffusion too");
    f.o_pair = cmd->add_flag("--transport-pair", f.transport_pair,
                             "Research: transport both pair members");
    f.o_nondet = cmd->add_flag("--allow-nondeterministic", f.allow_nondet,
                               "Accept non-deterministic backends (degrades reproducibility)");
    cmd->add_option("--control", f.control_path, "Control map image (RefGen conditioning)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--control-type", f.control_type, "seg | pose (required with --control)");
}

// Applies a config-shaped JSON object (from --config or a metadata file's
// "config" block) onto cfg. Unknown keys are an error so typos do not pass
// silently.
void apply_config_json(StegoConfig& cfg, const json& j, bool& xi_present,
                       const std::string& where) {
    for (const auto& [key, val] : j.items()) {
        if (key == "steps") cfg.steps = val.get<int>();
        else if (key == "xi") { cfg.xi = val.get<double>(); xi_present = true; }
        else if (key == "eta") cfg.eta = val.get<double>();
        else if (key == "mix") cfg.p = val.get<double>();
        else if (key == "ip_weight") cfg.ip_weight = val.get<float>();
        else if (key == "guidance_scale") cfg.guidance_scale = val.get<double>();
        else if (key == "backend") cfg.backend_kind = val.get<std::string>();
        else if (key == "model_a") cfg.model_a = val.get<std::string>();
        else if (key == "model_b") cfg.model_b = val.get<std::string>();
        else if (key == "refgen_model") cfg.refgen_model = val.get<std::string>();
        else if (key == "model_dir") cfg.model_dir = val.get<std::string>();
        else if (key == "prompt1") cfg.prompt1 = val.get<std::string>();
        else if (key == "control_in_stego") cfg.control_in_stego = val.get<bool>();
        else if (key == "transport_pair") cfg.transport_pair = val.get<bool>();
        else if (key == "allow_nondeterministic") cfg.allow_nondeterministic = val.get<bool>();
        else if (key == "category") cfg.category = val.get<std::string>();
        else throw UsageError(where + ": unknown config key '" + key + "'");
    }
}

struct Resolved {
    StegoConfig cfg;
    bool xi_explicit = false;
    std::optional<Conditioning::Control> control;
    std::string control_path;
};

// defaults -> --config file -> metadata config block -> explicit flags.
Resolved resolve_config(const ProtoFlags& f, const json* metadata_config = nullptr) {
    Resolved r;
    bool xi_pinned = false;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw UsageError("cannot read config file " + f.config_path);
        json j;
        in >> j;
        apply_config_json(r.cfg, j, xi_pinned, f.config_path);
    }
    if (metadata_config != nullptr)
        apply_config_json(r.cfg, *metadata_config, xi_pinned, "metadata config");

    StegoConfig& c = r.cfg;
    if (f.o_backend->count()) c.backend_kind = f.backend;
    if (f.o_model_a->count()) c.model_a = f.model_a;
    if (f.o_model_b->count()) c.model_b = f.model_b;
    if (f.o_refgen->count()) c.refgen_model = f.refgen_model;
    if (f.o_model_dir->count()) c.model_dir = f.model_dir;
    if (f.o_steps->count()) c.steps = f.steps;
    if (f.o_xi->count()) { c.xi = f.xi; xi_pinned = true; }
    if (f.o_eta->count()) c.eta = f.eta;
    if (f.o_mix->count()) c.p = f.mix;
    if (f.o_ip->count()) c.ip_weight = static_cast<float>(f.ip_weight);
    if (f.o_guidance->count()) c.guidance_scale = f.guidance;
    if (f.o_category->count()) c.category = f.category;
    if (f.o_prompt1->count()) c.prompt1 = f.prompt1;
    if (f.o_cis->count()) c.control_in_stego = f.control_in_stego;
    if (f.o_pair->count()) c.transport_pair = f.transport_pair;
    if (f.o_nondet->count()) c.allow_nondeterministic = f.allow_nondet;

    r.xi_explicit = xi_pinned;
    if (!xi_pinned) c.xi = StegoConfig::default_xi_for(c.category);
    c.validate();

    if (!f.control_path.empty()) {
        if (f.control_type != "seg" && f.control_type != "pose")
            throw UsageError("--control requires --control-type seg|pose");
        Conditioning::Control ctl;
        ctl.map = load_image(f.control_path);
        ctl.type = f.control_type;
        r.control = std::move(ctl);
        r.control_path = f.control_path;
    } else if (!f.control_type.empty()) {
        throw UsageError("--control-type given without --control");
    }
    return r;
}

// ---------------------------------------------------------------------------
// Artifact writers. Everything public passes the secret scan first.

void ensure_no_secret(const std::string& text, const std::vector<std::string>& secrets,
                      const std::string& what) {
    for (const auto& s : secrets)
        if (!s.empty() && text.find(s) != std::string::npos)
            throw PipelineError("refusing to write " + what + ": secret bytes detected");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw PipelineError("short write to " + path);
}

ordered_json config_to_json(const StegoConfig& c) {
    return ordered_json{{"steps", c.steps},
                        {"xi", c.xi},
                        {"eta", c.eta},
                        {"mix", c.p},
                        {"ip_weight", c.ip_weight},
                        {"guidance_scale", c.guidance_scale},
                        {"backend", c.backend_kind},
                        {"model_a", c.model_a},
                        {"model_b", c.model_b},
                        {"refgen_model", c.refgen_model},
                        {"model_dir", c.model_dir},
                        {"prompt1", c.prompt1},
                        {"control_in_stego", c.control_in_stego},
                        {"transport_pair", c.transport_pair},
                        {"allow_nondeterministic", c.allow_nondeterministic},
                        {"category", c.category}};
}

// Public sidecar: everything needed to rerun the command except the password.
// No mask/reference digests here — those are key-correlated and belong to the
// private audit file only.
ordered_json public_metadata(const std::string& command, const Resolved& r,
                             const std::string& prompt2, const std::string& input,
                             const std::string& output) {
    ordered_json j;
    j["tool"] = "stegakit";
    j["command"] = command;
    j["prompt2"] = prompt2;
    j["config"] = config_to_json(r.cfg);
    j["config_hash"] = r.cfg.config_hash();
    if (r.control)
        j["control"] = {{"path", r.control_path}, {"type", r.control->type}};
    else
        j["control"] = nullptr;
    j["input"] = input;
    j["output"] = output;
    return j;
}

ordered_json audit_to_json(const Audit& a) {
    ordered_json j;
    j["config_hash"] = a.config_hash;
    j["mask_digest"] = a.mask_digest;
    j["ref_digest"] = a.ref_digest;
    j["depth"] = a.depth;
    j["invert_calls"] = a.invert_calls;
    j["denoise_calls"] = a.denoise_calls;
    j["elapsed_seconds"] = a.elapsed_seconds;
    j["trace"] = a.trace;
    return j;
}

// Stego output must be lossless unless the caller explicitly opts into JPEG.
void save_output_image(const std::string& path, const Image& img, int jpeg_quality,
                       bool jpeg_quality_set) {
    std::string lower = path;
    for (char& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const bool is_jpeg = lower.size() >= 4 && (lower.rfind(".jpg") == lower.size() - 4 ||
                                               lower.rfind(".jpeg") == lower.size() - 5);
    if (is_jpeg && !jpeg_quality_set)
        throw UsageError("JPEG output is lossy; pass --jpeg-quality explicitly to allow it");
    save_image(path, img, jpeg_quality);
}

std::string default_meta_path(const std::string& out) { return out + ".meta.json"; }

// Loads a metadata sidecar for recover/attack: returns its config block and
// prompt2 so a run is reproducible from metadata + password alone.
json load_metadata(const std::string& path, std::string& prompt2_out) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read metadata file " + path);
    json j;
    in >> j;
    if (j.contains("prompt2")) prompt2_out = j["prompt2"].get<std::string>();
    if (!j.contains("config")) throw UsageError(path + ": no config block");
    return j["config"];
}

// ---------------------------------------------------------------------------
// Commands.

struct HideArgs {
    ProtoFlags proto;
    std::string in, prompt2, out = "stego.png", meta, save_ref, audit, pair_out;
    int jpeg_quality = 90;
    CLI::Option* o_jpeg = nullptr;
};

int cmd_hide(const HideArgs& a) {
    Resolved r = resolve_config(a.proto);
    if (a.prompt2.empty()) throw UsageError("--prompt2 is required");
    if (!r.cfg.prompt1.empty())
        std::fprintf(stderr,
                     "warning: non-null prompt1 weakens the null-text security argument\n");
    const Password pw = require_password("STEGA_PASSWORD", "password");

    const Image ori = load_image(a.in);
    BackendSet set = make_backend_set(r.cfg);
    StegoResult res = hide(ori, a.prompt2, pw, r.control, r.cfg, set);

    // The toy backend has no autoencoder to absorb transport quantization:
    // the inversion amplifies 8-bit rounding past recovery. Pretrained
    // backends work from 8-bit images by construction.
    std::string out_lower = a.out;
    for (char& ch : out_lower)
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const bool is_pfm =
        out_lower.size() >= 4 && out_lower.compare(out_lower.size() - 4, 4, ".pfm") == 0;
    if (r.cfg.backend_kind == "toy" && !is_pfm)
        std::fprintf(stderr,
                     "warning: toy backend needs float transport for exact recovery; "
                     "use a .pfm output instead of %s\n",
                     a.out.c_str());

    save_output_image(a.out, res.image, a.jpeg_quality, a.o_jpeg->count() > 0);
    if (res.pair_second) {
        if (a.pair_out.empty())
            throw UsageError("--transport-pair needs --pair-out for the second member");
        save_output_image(a.pair_out, *res.pair_second, a.jpeg_quality, a.o_jpeg->count() > 0);
    }

    const std::string meta_path = a.meta.empty() ? default_meta_path(a.out) : a.meta;
    const std::string meta_text =
        public_metadata("hide", r, a.prompt2, a.in, a.out).dump(2) + "\n";
    ensure_no_secret(meta_text, {pw.secret, res.audit.mask_digest, res.audit.ref_digest},
                     meta_path);
    write_text(meta_path, meta_text);

    if (!a.audit.empty()) write_text(a.audit, audit_to_json(res.audit).dump(2) + "\n");

    if (!a.save_ref.empty()) {
        RefOptions ro;
        ro.prompt2 = a.prompt2;
        ro.steps = r.cfg.steps;
        ro.guidance_scale = r.cfg.guidance_scale;
        ro.height = image_height(ori);
        ro.width = image_width(ori);
        ro.control = r.control;
        ro.allow_nondeterministic = r.cfg.allow_nondeterministic;
        save_image(a.save_ref, generate_reference(*set.ref, pw, ro));
        std::fprintf(stderr,
                     "warning: %s is secret material (reference image); do not publish\n",
                     a.save_ref.c_str());
    }

    std::printf("hide: wrote %s (depth %d, %ld denoiser calls, %.2fs); metadata %s\n",
                a.out.c_str(), res.audit.depth,
                res.audit.invert_calls + res.audit.denoise_calls, res.audit.elapsed_seconds,
                meta_path.c_str());
    return 0;
}

struct RecoverArgs {
    ProtoFlags proto;
    std::string in, prompt2, out = "recovered.png", meta, audit, pair_in, expect_ref_digest;
    int jpeg_quality = 90;
    CLI::Option* o_jpeg = nullptr;
};

int cmd_recover(const RecoverArgs& a) {
    std::string prompt2 = a.prompt2;
    std::optional<json> meta_cfg;
    if (!a.meta.empty()) {
        std::string meta_prompt;
        meta_cfg = load_metadata(a.meta, meta_prompt);
        if (prompt2.empty()) prompt2 = meta_prompt;
    }
    Resolved r = resolve_config(a.proto, meta_cfg ? &*meta_cfg : nullptr);
    if (prompt2.empty()) throw UsageError("--prompt2 (or --meta with one) is required");
    const Password pw = require_password("STEGA_PASSWORD", "password");

    const Image enc = load_image(a.in);
    std::optional<Image> pair_second;
    if (!a.pair_in.empty()) pair_second = load_image(a.pair_in);
    std::optional<std::string> expect;
    if (!a.expect_ref_digest.empty()) expect = a.expect_ref_digest;

    BackendSet set = make_backend_set(r.cfg);
    StegoResult res = recover(enc, prompt2, pw, r.control, r.cfg, set, expect, pair_second);

    save_output_image(a.out, res.image, a.jpeg_quality, a.o_jpeg->count() > 0);
    if (!a.audit.empty()) write_text(a.audit, audit_to_json(res.audit).dump(2) + "\n");
    std::printf("recover: wrote %s (depth %d, %ld denoiser calls, %.2fs)\n", a.out.c_str(),
                res.audit.depth, res.audit.invert_calls + res.audit.denoise_calls,
                res.audit.elapsed_seconds);
    return 0;
}

struct AttackArgs {
    ProtoFlags proto;
    std::string in, prompt2, out = "attacked.png", meta, mode = "none", audit;
    int jpeg_quality = 90;
    CLI::Option* o_jpeg = nullptr;
};

int cmd_attack(const AttackArgs& a) {
    if (a.mode != "none" && a.mode != "wrong")
        throw UsageError("--mode must be none or wrong");
    std::string prompt2 = a.prompt2;
    std::optional<json> meta_cfg;
    if (!a.meta.empty()) {
        std::string meta_prompt;
        meta_cfg = load_metadata(a.meta, meta_prompt);
        if (prompt2.empty()) prompt2 = meta_prompt;
    }
    Resolved r = resolve_config(a.proto, meta_cfg ? &*meta_cfg : nullptr);
    if (prompt2.empty()) throw UsageError("--prompt2 (or --meta with one) is required");

    const Image enc = load_image(a.in);
    BackendSet set = make_backend_set(r.cfg);
    StegoResult res = a.mode == "none"
        ? attack_recover_no_password(enc, prompt2, r.cfg, set)
        : attack_recover_wrong_password(
              enc, prompt2, require_password("STEGA_WRONG_PASSWORD", "wrong password"),
              r.control, r.cfg, set);

    save_output_image(a.out, res.image, a.jpeg_quality, a.o_jpeg->count() > 0);
    if (!a.audit.empty()) write_text(a.audit, audit_to_json(res.audit).dump(2) + "\n");
    std::printf("attack(%s): wrote %s\n", a.mode.c_str(), a.out.c_str());
    return 0;
}

struct RefgenArgs {
    ProtoFlags proto;
    std::string prompt2, out = "reference.png";
    int height = 512, width = 512;
};

int cmd_refgen(const RefgenArgs& a) {
    Resolved r = resolve_config(a.proto);
    if (a.prompt2.empty()) throw UsageError("--prompt2 is required");
    const Password pw = require_password("STEGA_PASSWORD", "password");

    auto model = make_backend(r.cfg, r.cfg.refgen_model);
    RefOptions ro;
    ro.prompt2 = a.prompt2;
    ro.steps = r.cfg.steps;
    ro.guidance_scale = r.cfg.guidance_scale;
    ro.height = a.height;
    ro.width = a.width;
    ro.control = r.control;
    ro.allow_nondeterministic = r.cfg.allow_nondeterministic;
    const Image ref = generate_reference(*model, pw, ro);
    save_image(a.out, ref);
    std::fprintf(stderr, "warning: %s is secret material (reference image); do not publish\n",
                 a.out.c_str());
    std::printf("refgen: wrote %s (%dx%d)\n", a.out.c_str(), a.width, a.height);
    return 0;
}

struct EvalArgs {
    ProtoFlags proto;
    std::string manifest, report_json = "report.json", report_csv = "report.csv", workdir;
    std::vector<std::string> scenarios;
    std::vector<std::string> degradations;
    std::vector<std::string> plugin_cmds, plugin_arities, plugin_versions;
    std::string wrong_password_env;
    int jobs = 1;
};

std::pair<std::string, std::string> split_kv(const std::string& s, const std::string& flag) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
        throw UsageError(flag + " expects NAME=VALUE, got '" + s + "'");
    return {s.substr(0, eq), s.substr(eq + 1)};
}

int cmd_evaluate(const EvalArgs& a) {
    Resolved r = resolve_config(a.proto);
    const Password pw = require_password("STEGA_PASSWORD", "password");

    EvalOptions opt;
    if (!a.scenarios.empty()) opt.scenarios = a.scenarios;
    if (!a.degradations.empty()) opt.degradations = a.degradations;
    opt.xi_explicit = r.xi_explicit;
    opt.jobs = a.jobs;
    opt.workdir = a.workdir;
    if (!a.wrong_password_env.empty()) {
        auto wp = env_value(a.wrong_password_env.c_str());
        if (!wp) throw UsageError("environment variable " + a.wrong_password_env + " is not set");
        opt.wrong_password = *wp;
    }
    for (const auto& spec : a.plugin_cmds) {
        auto [name, command] = split_kv(spec, "--plugin");
        PluginSpec p;
        p.command = command;
        p.arity = (name == "clip_score") ? "image_text" : "pair";
        opt.plugins[name] = std::move(p);
    }
    for (const auto& spec : a.plugin_arities) {
        auto [name, arity] = split_kv(spec, "--plugin-arity");
        auto it = opt.plugins.find(name);
        if (it == opt.plugins.end()) throw UsageError("--plugin-arity for unregistered " + name);
        if (arity != "pair" && arity != "image_text")
            throw UsageError("plugin arity must be pair or image_text");
        it->second.arity = arity;
    }
    for (const auto& spec : a.plugin_versions) {
        auto [name, version] = split_kv(spec, "--plugin-version");
        auto it = opt.plugins.find(name);
        if (it == opt.plugins.end()) throw UsageError("--plugin-version for unregistered " + name);
        it->second.version = version;
    }

    const std::vector<ManifestItem> manifest = parse_manifest(a.manifest);
    if (manifest.empty())
        std::fprintf(stderr, "warning: manifest %s has no items\n", a.manifest.c_str());

    const MetricReport report = evaluate(manifest, r.cfg, pw, opt);

    const std::string json_text = report_to_json(report, opt.plugins).dump(2) + "\n";
    const std::string csv_text = report_to_csv(report, opt.plugins);
    const std::vector<std::string> secrets = {pw.secret, opt.wrong_password};
    ensure_no_secret(json_text, secrets, a.report_json);
    ensure_no_secret(csv_text, secrets, a.report_csv);
    write_text(a.report_json, json_text);
    write_text(a.report_csv, csv_text);

    std::printf("evaluate: %zu items, %d failures; reports %s %s\n", report.items.size(),
                report.failures, a.report_json.c_str(), a.report_csv.c_str());
    for (const auto& deg : report.degradations) {
        const auto dit = report.aggregate.find(deg);
        if (dit == report.aggregate.end()) continue;
        for (const auto& scen : report.scenarios) {
            const auto sit = dit->second.find(scen);
            if (sit == dit->second.end()) continue;
            std::ostringstream line;
            line << "  [" << deg << "/" << scen << "]";
            for (const auto& [metric, value] : sit->second)
                line << " " << metric << "=" << detail::fmt6(value);
            std::printf("%s\n", line.str().c_str());
        }
    }
    return report.failures == 0 ? 0 : 1;
}

struct SelftestArgs {
    bool mutate = false;
    bool emit_mask_digest = false;
    bool skip_cross_process = false;
    std::string depth_sweep_out;
    int steps = 50;
    double mix = 0.93;
    std::string toy_id = "toy:affine:0.1";
    double eta = 0.05;
    CLI::Option* o_sweep = nullptr;
};

// Runs this binary again to prove the mask derivation is process-independent.
// The probe child runs WITHOUT the mutation flag, so a corrupted seed constant
// in the parent shows up here (and in golden-seed) while involution stays
// green — the failure mode called out in the selftest contract.
CheckResult cross_process_check(const std::string& self_exe, const SelftestOptions& opt,
                                double eta) {
    CheckResult r{"cross-process-mask", false, ""};
    const std::string probe_pw = "golden-password";
    const std::string local = selftest_mask_digest(probe_pw, {4, 64, 64}, eta, opt);

    std::string saved;
    bool had = false;
    if (const char* prev = std::getenv("STEGA_PASSWORD")) {
        saved = prev;
        had = true;
    }
    setenv("STEGA_PASSWORD", probe_pw.c_str(), 1);
    std::string cmd = "'" + self_exe + "' selftest --emit-mask-digest --eta " +
                      std::to_string(eta) + " 2>/dev/null";
    std::string child;
    if (FILE* pipe = popen(cmd.c_str(), "r")) {
        char buf[256];
        while (fgets(buf, sizeof(buf), pipe) != nullptr) child += buf;
        pclose(pipe);
    }
    if (had)
        setenv("STEGA_PASSWORD", saved.c_str(), 1);
    else
        unsetenv("STEGA_PASSWORD");

    while (!child.empty() && (child.back() == '\n' || child.back() == '\r')) child.pop_back();
    if (child.empty()) {
        r.detail = "child process produced no digest";
        return r;
    }
    r.pass = child == local;
    r.detail = r.pass ? "child digest matches in-process digest"
                      : "digest mismatch: in-process " + local.substr(0, 12) + "... vs child " +
                            child.substr(0, 12) + "...";
    return r;
}

int cmd_selftest(const SelftestArgs& a, const std::string& self_exe) {
    SelftestOptions opt;
    opt.mutate_seed_constant = a.mutate;

    if (a.emit_mask_digest) {
        const Password pw = require_password("STEGA_PASSWORD", "password");
        std::printf("%s\n", selftest_mask_digest(pw.secret, {4, 64, 64}, a.eta, opt).c_str());
        return 0;
    }

    if (a.o_sweep->count()) {
        const std::vector<DepthSweepRow> rows = depth_sweep(a.steps, a.mix, a.toy_id);
        std::ostringstream csv;
        csv << "depth,max_abs_err,mean_abs_err\n";
        for (const auto& row : rows)
            csv << row.depth << "," << std::scientific << std::setprecision(9) << row.max_abs_err
                << "," << row.mean_abs_err << "\n";
        if (a.depth_sweep_out == "-")
            std::fputs(csv.str().c_str(), stdout);
        else
            write_text(a.depth_sweep_out, csv.str());
        return 0;
    }

    std::vector<CheckResult> results = run_selftest(opt);
    if (!a.skip_cross_process) results.push_back(cross_process_check(self_exe, opt, a.eta));

    bool all = true;
    for (const auto& r : results) {
        std::printf("%-24s %s  %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                    r.detail.c_str());
        all = all && r.pass;
    }
    std::printf("selftest: %s\n", all ? "all checks passed" : "FAILURES DETECTED");
    return all ? 0 : 1;
}

std::string self_path(const char* argv0) {
#if defined(__linux__)
    char buf[4096];
    const ssize_t n = readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n > 0) {
        buf[n] = '\0';
        return buf;
    }
#endif
    return argv0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stegakit: coverless image hiding via coupled invertible diffusion"};
    app.require_subcommand(1);

    HideArgs hide_args;
    CLI::App* hide_cmd = app.add_subcommand("hide", "Hide an image inside a generated stego image");
    add_proto_flags(hide_cmd, hide_args.proto);
    hide_cmd->add_option("--in", hide_args.in, "Image to hide")->required()
        ->check(CLI::ExistingFile);
    hide_cmd->add_option("--prompt2", hide_args.prompt2, "Public prompt for the stego side");
    hide_cmd->add_option("--out", hide_args.out, "Stego image path (.png/.pfm; .jpg gated)");
    hide_cmd->add_option("--meta", hide_args.meta, "Public metadata path (default <out>.meta.json)");
    hide_cmd->add_option("--save-ref", hide_args.save_ref, "Write reference image (secret!)");
    hide_cmd->add_option("--audit", hide_args.audit, "Private audit JSON path");
    hide_cmd->add_option("--pair-out", hide_args.pair_out, "Second member path (transport-pair)");
    hide_args.o_jpeg = hide_cmd->add_option("--jpeg-quality", hide_args.jpeg_quality,
                                            "Enable lossy JPEG output at this quality");

    RecoverArgs rec_args;
    CLI::App* rec_cmd = app.add_subcommand("recover", "Recover the hidden image with the password");
    add_proto_flags(rec_cmd, rec_args.proto);
    rec_cmd->add_option("--in", rec_args.in, "Stego image")->required()->check(CLI::ExistingFile);
    rec_cmd->add_option("--prompt2", rec_args.prompt2, "Public prompt (or take it from --meta)");
    rec_cmd->add_option("--out", rec_args.out, "Recovered image path");
    rec_cmd->add_option("--meta", rec_args.meta, "Metadata file from hide")
        ->check(CLI::ExistingFile);
    rec_cmd->add_option("--audit", rec_args.audit, "Private audit JSON path");
    rec_cmd->add_option("--pair-in", rec_args.pair_in, "Second member path (transport-pair)")
        ->check(CLI::ExistingFile);
    rec_cmd->add_option("--expect-ref-digest", rec_args.expect_ref_digest,
                        "Fail fast if the regenerated reference digest differs");
    rec_args.o_jpeg = rec_cmd->add_option("--jpeg-quality", rec_args.jpeg_quality,
                                          "Enable lossy JPEG output at this quality");

    AttackArgs atk_args;
    CLI::App* atk_cmd = app.add_subcommand("attack", "Adversarial recovery probes");
    add_proto_flags(atk_cmd, atk_args.proto);
    atk_cmd->add_option("--in", atk_args.in, "Stego image")->required()->check(CLI::ExistingFile);
    atk_cmd->add_option("--prompt2", atk_args.prompt2, "Public prompt (or take it from --meta)");
    atk_cmd->add_option("--mode", atk_args.mode, "none (no password) | wrong (wrong password)");
    atk_cmd->add_option("--out", atk_args.out, "Attack output path");
    atk_cmd->add_option("--meta", atk_args.meta, "Metadata file from hide")
        ->check(CLI::ExistingFile);
    atk_cmd->add_option("--audit", atk_args.audit, "Private audit JSON path");
    atk_args.o_jpeg = atk_cmd->add_option("--jpeg-quality", atk_args.jpeg_quality,
                                          "Enable lossy JPEG output at this quality");

    RefgenArgs ref_args;
    CLI::App* ref_cmd = app.add_subcommand("refgen", "Generate the password-keyed reference image");
    add_proto_flags(ref_cmd, ref_args.proto);
    ref_cmd->add_option("--prompt2", ref_args.prompt2, "Public prompt");
    ref_cmd->add_option("--out", ref_args.out, "Reference image path (secret!)");
    ref_cmd->add_option("--height", ref_args.height, "Image height");
    ref_cmd->add_option("--width", ref_args.width, "Image width");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Run the metric harness over a manifest");
    add_proto_flags(eval_cmd, eval_args.proto);
    eval_cmd->add_option("--manifest", eval_args.manifest, "JSONL manifest")->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--report-json", eval_args.report_json, "Report JSON path");
    eval_cmd->add_option("--report-csv", eval_args.report_csv, "Report CSV path");
    eval_cmd->add_option("--scenarios", eval_args.scenarios,
                         "Scenario subset (encrypted,correct,none,wrong)")->delimiter(',');
    eval_cmd->add_option("--degradations", eval_args.degradations,
                         "Degradations (none,gaussian_blur,jpeg)")->delimiter(',');
    eval_cmd->add_option("--plugin", eval_args.plugin_cmds,
                         "External metric NAME=COMMAND (repeatable)");
    eval_cmd->add_option("--plugin-arity", eval_args.plugin_arities,
                         "Override plugin arity NAME=pair|image_text");
    eval_cmd->add_option("--plugin-version", eval_args.plugin_versions,
                         "Tag plugin version NAME=VERSION");
    eval_cmd->add_option("--wrong-password-env", eval_args.wrong_password_env,
                         "Env var holding the wrong-key probe password");
    eval_cmd->add_option("--jobs", eval_args.jobs, "Parallel workers (toy backend only)");
    eval_cmd->add_option("--workdir", eval_args.workdir, "Scratch dir for plugin images");

    SelftestArgs st_args;
    CLI::App* st_cmd = app.add_subcommand("selftest", "Run the built-in property checks");
    st_cmd->add_flag("--mutate-seed-constant", st_args.mutate,
                     "Corrupt the seed-domain constant (mutation demonstration)");
    st_args.o_sweep = st_cmd->add_option("--depth-sweep", st_args.depth_sweep_out,
                                         "Write drift-vs-depth CSV to PATH ('-' for stdout)");
    st_cmd->add_option("--steps", st_args.steps, "Schedule steps for the sweep");
    st_cmd->add_option("--mix", st_args.mix, "Mixing coefficient p for the sweep");
    st_cmd->add_option("--toy-id", st_args.toy_id, "Toy denoiser id for the sweep");
    st_cmd->add_option("--eta", st_args.eta, "Flip budget for the mask digest checks");
    st_cmd->add_flag("--emit-mask-digest", st_args.emit_mask_digest,
                     "Internal: print the mask digest for STEGA_PASSWORD and exit");
    st_cmd->add_flag("--skip-cross-process", st_args.skip_cross_process,
                     "Skip the child-process determinism check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (hide_cmd->parsed()) return cmd_hide(hide_args);
        if (rec_cmd->parsed()) return cmd_recover(rec_args);
        if (atk_cmd->parsed()) return cmd_attack(atk_args);
        if (ref_cmd->parsed()) return cmd_refgen(ref_args);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_args);
        if (st_cmd->parsed()) return cmd_selftest(st_args, self_path(argv[0]));
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
