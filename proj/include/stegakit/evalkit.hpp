#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "stegakit/backends.hpp"
#include "stegakit/degrade.hpp"
#include "stegakit/imageio.hpp"
#include "stegakit/metrics.hpp"
#include "stegakit/pipeline.hpp"

namespace stegakit {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One line of the evaluation manifest (JSON lines, one object per line).
struct ManifestItem {
    std::string image_path;
    std::string prompt2;
    std::string control_path;  // optional
    std::string control_type;  // required iff control_path given; "seg" | "pose"
    std::string category = "content";
};

inline std::vector<ManifestItem> parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EvalError("cannot open manifest: " + path);
    std::vector<ManifestItem> items;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw EvalError("manifest line " + std::to_string(lineno) + " is not a JSON object");
        ManifestItem it;
        if (!j.contains("image_path") || !j.contains("prompt2"))
            throw EvalError("manifest line " + std::to_string(lineno) +
                            " needs image_path and prompt2");
        it.image_path = j["image_path"].get<std::string>();
        it.prompt2 = j["prompt2"].get<std::string>();
        if (j.contains("control_path")) it.control_path = j["control_path"].get<std::string>();
        if (j.contains("control_type")) it.control_type = j["control_type"].get<std::string>();
        if (j.contains("category")) it.category = j["category"].get<std::string>();
        if (it.category != "content" && it.category != "style" && it.category != "similar")
            throw EvalError("manifest line " + std::to_string(lineno) + ": bad category '" +
                            it.category + "'");
        if (!it.control_path.empty() && it.control_type != "seg" && it.control_type != "pose")
            throw EvalError("manifest line " + std::to_string(lineno) +
                            ": control_path given but control_type is not seg|pose");
        items.push_back(std::move(it));
    }
    return items;
}

// External metric plugin: an executable invoked per image pair (or image +
// text), printing one number on stdout. Scores are recorded verbatim with the
// plugin version; unregistered metrics are reported as absent, never as zero.
struct PluginSpec {
    std::string command;
    std::string arity = "pair";  // "pair" | "image_text"
    std::string version = "unversioned";
};
using PluginRegistry = std::map<std::string, PluginSpec>;

struct EvalOptions {
    std::vector<std::string> scenarios = {"encrypted", "correct", "none", "wrong"};
    std::vector<std::string> degradations = {"none"};
    std::string wrong_password;  // empty -> derived from the correct one
    bool xi_explicit = false;    // true: cfg.xi wins over the category default
    int jobs = 1;
    PluginRegistry plugins;
    std::string workdir;  // scratch space for plugin image files
};

namespace detail {

inline const std::vector<std::string>& canonical_scenarios() {
    static const std::vector<std::string> s = {"encrypted", "correct", "none", "wrong"};
    return s;
}

// Scenario set in Table-1 column order regardless of the order requested.
inline std::vector<std::string> normalize_scenarios(std::vector<std::string> req) {
    std::vector<std::string> out;
    for (const auto& s : canonical_scenarios()) {
        if (std::find(req.begin(), req.end(), s) != req.end()) out.push_back(s);
    }
    for (const auto& s : req)
        if (std::find(canonical_scenarios().begin(), canonical_scenarios().end(), s) ==
            canonical_scenarios().end())
            throw EvalError("unknown scenario '" + s + "'");
    return out;
}

inline std::string run_plugin(const PluginSpec& spec, const std::string& arg1,
                              const std::string& arg2) {
    auto quote = [](const std::string& s) {
        std::string q = "'";
        for (char c : s) {
            if (c == '\'')
                q += "'\\''";
            else
                q += c;
        }
        return q + "'";
    };
    const std::string cmd = spec.command + " " + quote(arg1) + " " + quote(arg2) + " 2>/dev/null";
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) throw EvalError("failed to launch plugin: " + spec.command);
    std::string out;
    char buf[256];
    while (size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int rc = ::pclose(p);
    if (rc != 0) throw EvalError("plugin exited with status " + std::to_string(rc));
    return out;
}

inline double parse_plugin_score(const std::string& out) {
    std::istringstream is(out);
    double v;
    if (!(is >> v)) throw EvalError("plugin produced no numeric score: '" + out + "'");
    return v;
}

inline std::string redact(std::string msg, const std::vector<std::string>& secrets) {
    for (const auto& s : secrets) {
        if (s.empty()) continue;
        size_t pos;
        while ((pos = msg.find(s)) != std::string::npos) msg.replace(pos, s.size(), "[redacted]");
    }
    return msg;
}

}  // namespace detail

// Per-(degradation, scenario) metric values for one item. Plugin metrics live
// beside the native ones, tagged with the plugin version.
struct ScenarioMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
    std::map<std::string, std::pair<double, std::string>> plugin_values;  // name -> (score, version)
};

struct ItemResult {
    ManifestItem item;
    double xi = 0.0;
    bool ok = false;
    std::string error;
    // degradation -> scenario -> metrics
    std::map<std::string, std::map<std::string, ScenarioMetrics>> results;
};

struct MetricReport {
    StegoConfig config;
    std::vector<std::string> scenarios;
    std::vector<std::string> degradations;
    std::vector<ItemResult> items;
    int failures = 0;
    // degradation -> scenario -> metric name -> mean over ok items
    std::map<std::string, std::map<std::string, std::map<std::string, double>>> aggregate;
};

namespace detail {

inline ItemResult evaluate_item(const ManifestItem& item, const StegoConfig& base_cfg,
                                const EvalOptions& opt, const Password& password,
                                const Password& wrong_password, const BackendSet& backends,
                                const std::vector<std::string>& scenarios, size_t index) {
    ItemResult res;
    res.item = item;
    StegoConfig cfg = base_cfg;
    if (!opt.xi_explicit) cfg.xi = StegoConfig::default_xi_for(item.category);
    cfg.category = item.category;
    res.xi = cfg.xi;

    std::string mask_digest, ref_digest;
    try {
        Image I_ori = load_image(item.image_path);
        std::optional<Conditioning::Control> control;
        if (!item.control_path.empty()) {
            Conditioning::Control c;
            c.map = load_image(item.control_path);
            c.type = item.control_type;
            c.scale = 1.0f;
            control = c;
        }

        StegoResult enc = hide(I_ori, item.prompt2, password, control, cfg, backends);
        mask_digest = enc.audit.mask_digest;
        ref_digest = enc.audit.ref_digest;

        auto plugin_scores = [&](const std::string& scen, const Image& a, const Image& b,
                                 const std::string& deg) {
            ScenarioMetrics m;
            m.psnr = psnr(a, b);
            m.ssim = ssim(a, b);
            for (const auto& [name, spec] : opt.plugins) {
                const bool applies = spec.arity == "pair" || scen == "encrypted";
                if (!applies) continue;
                namespace fs = std::filesystem;
                fs::path dir = opt.workdir.empty() ? fs::temp_directory_path() : fs::path(opt.workdir);
                fs::create_directories(dir);
                const std::string stem = "item" + std::to_string(index) + "_" + deg + "_" + scen;
                const std::string pa = (dir / (stem + "_a.png")).string();
                // A broken plugin loses its own column only; the item and the
                // built-in metrics still report, and the value stays absent
                // (never zero).
                try {
                    if (spec.arity == "pair") {
                        const std::string pb = (dir / (stem + "_b.png")).string();
                        save_image(pa, a);
                        save_image(pb, b);
                        m.plugin_values[name] = {parse_plugin_score(run_plugin(spec, pa, pb)),
                                                 spec.version};
                    } else {
                        save_image(pa, a);
                        m.plugin_values[name] = {
                            parse_plugin_score(run_plugin(spec, pa, item.prompt2)), spec.version};
                    }
                } catch (const std::exception& e) {
                    std::fprintf(stderr, "warning: plugin %s failed on %s/%s: %s\n", name.c_str(),
                                 deg.c_str(), scen.c_str(), e.what());
                }
            }
            return m;
        };

        for (const auto& deg : opt.degradations) {
            Image enc_d = apply_degradation(enc.image, deg);
            for (const auto& scen : scenarios) {
                if (scen == "encrypted") {
                    res.results[deg][scen] = plugin_scores(scen, enc_d, I_ori, deg);
                } else if (scen == "correct") {
                    StegoResult rec = recover(enc_d, item.prompt2, password, control, cfg,
                                              backends, enc.audit.ref_digest);
                    res.results[deg][scen] = plugin_scores(scen, rec.image, I_ori, deg);
                } else if (scen == "none") {
                    StegoResult rec = attack_recover_no_password(enc_d, item.prompt2, cfg, backends);
                    res.results[deg][scen] = plugin_scores(scen, rec.image, I_ori, deg);
                } else if (scen == "wrong") {
                    StegoResult rec = attack_recover_wrong_password(enc_d, item.prompt2,
                                                                    wrong_password, control, cfg,
                                                                    backends);
                    res.results[deg][scen] = plugin_scores(scen, rec.image, I_ori, deg);
                }
            }
        }
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        // Key material must not leak into the (public) report via error text.
        res.error = detail::redact(e.what(), {password.secret, wrong_password.secret, mask_digest,
                                              ref_digest});
        res.results.clear();
    }
    return res;
}

}  // namespace detail

// Run the whole manifest: hide once per item, then every requested scenario
// under every requested degradation, metrics always against the original
// image. Item failures are isolated; aggregates are unweighted means over the
// successes.
inline MetricReport evaluate(const std::vector<ManifestItem>& manifest, const StegoConfig& cfg,
                             const Password& password, const EvalOptions& opt) {
    cfg.validate();
    MetricReport report;
    report.config = cfg;
    report.scenarios = detail::normalize_scenarios(opt.scenarios);
    report.degradations = opt.degradations.empty() ? std::vector<std::string>{"none"}
                                                   : opt.degradations;
    for (const auto& d : report.degradations)
        if (d != "none" && d != "gaussian_blur" && d != "jpeg")
            throw EvalError("unknown degradation '" + d + "'");

    const Password wrong = opt.wrong_password.empty()
                               ? Password(password.secret + "-wrong-key-probe")
                               : Password(opt.wrong_password);
    if (wrong.secret == password.secret)
        throw EvalError("wrong-password probe equals the correct password; the attack scenario "
                        "would silently measure correct recovery");

    const bool parallel_ok = opt.jobs > 1;
    if (parallel_ok && cfg.backend_kind != "toy")
        throw EvalError("parallel evaluation requires concurrent-safe (toy) backends; "
                        "run pretrained backends with --jobs 1");

    report.items.resize(manifest.size());
    if (!parallel_ok) {
        BackendSet shared = make_backend_set(cfg);
        for (size_t i = 0; i < manifest.size(); ++i)
            report.items[i] = detail::evaluate_item(manifest[i], cfg, opt, password, wrong, shared,
                                                    report.scenarios, i);
    } else {
        // One backend set per worker keeps handles un-shared.
        std::atomic<size_t> next{0};
        auto worker = [&]() {
            BackendSet own = make_backend_set(cfg);
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= manifest.size()) break;
                report.items[i] = detail::evaluate_item(manifest[i], cfg, opt, password, wrong,
                                                        own, report.scenarios, i);
            }
        };
        std::vector<std::thread> threads;
        const int nthreads = std::min<int>(opt.jobs, static_cast<int>(manifest.size()));
        threads.reserve(static_cast<size_t>(nthreads));
        for (int i = 0; i < nthreads; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }

    for (const auto& item : report.items)
        if (!item.ok) ++report.failures;

    // Aggregates: metric -> mean over items that produced it.
    for (const auto& deg : report.degradations) {
        for (const auto& scen : report.scenarios) {
            std::map<std::string, std::pair<double, long>> acc;
            for (const auto& item : report.items) {
                if (!item.ok) continue;
                const auto di = item.results.find(deg);
                if (di == item.results.end()) continue;
                const auto si = di->second.find(scen);
                if (si == di->second.end()) continue;
                acc["psnr"].first += si->second.psnr;
                acc["psnr"].second += 1;
                acc["ssim"].first += si->second.ssim;
                acc["ssim"].second += 1;
                for (const auto& [name, sv] : si->second.plugin_values) {
                    acc[name].first += sv.first;
                    acc[name].second += 1;
                }
            }
            for (const auto& [name, p] : acc)
                if (p.second > 0) report.aggregate[deg][scen][name] = p.first / static_cast<double>(p.second);
        }
    }
    return report;
}

namespace detail {

inline std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Columns of one scenario block in Table-1 order. Native metrics are always
// present; plugin columns appear when the plugin is registered; the image-text
// metric (CLIP-style) belongs to the encrypted block only.
inline std::vector<std::string> scenario_metric_columns(const std::string& scen,
                                                        const PluginRegistry& plugins) {
    std::vector<std::string> cols = {"psnr", "ssim"};
    if (plugins.count("lpips")) cols.push_back("lpips");
    if (plugins.count("id_sim")) cols.push_back("id_sim");
    if (scen == "encrypted" && plugins.count("clip_score")) cols.push_back("clip_score");
    for (const auto& [name, spec] : plugins) {
        if (name == "lpips" || name == "id_sim" || name == "clip_score") continue;
        if (spec.arity == "pair" || scen == "encrypted") cols.push_back(name);
    }
    return cols;
}

}  // namespace detail

// CSV: one row per (item, degradation) plus one mean row per degradation.
// Cells for absent plugin values are empty, never zero.
inline std::string report_to_csv(const MetricReport& report, const PluginRegistry& plugins) {
    std::ostringstream out;
    out << "item,category,degradation,xi";
    for (const auto& scen : report.scenarios)
        for (const auto& m : detail::scenario_metric_columns(scen, plugins))
            out << "," << scen << "_" << m;
    out << "\n";

    auto item_cell = [&](const ItemResult& item, const std::string& deg) {
        out << item.item.image_path << "," << item.item.category << "," << deg << ","
            << detail::fmt6(item.xi);
        for (const auto& scen : report.scenarios) {
            for (const auto& m : detail::scenario_metric_columns(scen, plugins)) {
                out << ",";
                if (!item.ok) continue;
                const auto di = item.results.find(deg);
                if (di == item.results.end()) continue;
                const auto si = di->second.find(scen);
                if (si == di->second.end()) continue;
                if (m == "psnr")
                    out << detail::fmt6(si->second.psnr);
                else if (m == "ssim")
                    out << detail::fmt6(si->second.ssim);
                else {
                    const auto pi = si->second.plugin_values.find(m);
                    if (pi != si->second.plugin_values.end()) out << detail::fmt6(pi->second.first);
                }
            }
        }
        out << "\n";
    };

    for (const auto& deg : report.degradations)
        for (const auto& item : report.items) item_cell(item, deg);

    for (const auto& deg : report.degradations) {
        out << "mean,all," << deg << ",";
        for (const auto& scen : report.scenarios) {
            for (const auto& m : detail::scenario_metric_columns(scen, plugins)) {
                out << ",";
                const auto di = report.aggregate.find(deg);
                if (di == report.aggregate.end()) continue;
                const auto si = di->second.find(scen);
                if (si == di->second.end()) continue;
                const auto mi = si->second.find(m);
                if (mi != si->second.end()) out << detail::fmt6(mi->second);
            }
        }
        out << "\n";
    }
    return out.str();
}

inline nlohmann::ordered_json report_to_json(const MetricReport& report,
                                             const PluginRegistry& plugins) {
    nlohmann::ordered_json j;
    j["config"] = {{"steps", report.config.steps},
                   {"xi", report.config.xi},
                   {"eta", report.config.eta},
                   {"p", report.config.p},
                   {"ip_weight", report.config.ip_weight},
                   {"guidance_scale", report.config.guidance_scale},
                   {"backend", report.config.backend_kind},
                   {"model_a", report.config.model_a},
                   {"model_b", report.config.model_b},
                   {"refgen_model", report.config.refgen_model},
                   {"category", report.config.category}};
    j["config_hash"] = report.config.config_hash();
    j["scenarios"] = report.scenarios;
    j["degradations"] = report.degradations;
    j["items_total"] = report.items.size();
    j["failures"] = report.failures;

    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const auto& item : report.items) {
        nlohmann::ordered_json ji;
        ji["image_path"] = item.item.image_path;
        ji["prompt2"] = item.item.prompt2;
        ji["category"] = item.item.category;
        ji["xi"] = item.xi;
        ji["status"] = item.ok ? "ok" : "error";
        if (!item.ok) ji["error"] = item.error;
        nlohmann::ordered_json jr;
        for (const auto& deg : report.degradations) {
            const auto di = item.results.find(deg);
            if (di == item.results.end()) continue;
            nlohmann::ordered_json jd;
            for (const auto& scen : report.scenarios) {
                const auto si = di->second.find(scen);
                if (si == di->second.end()) continue;
                nlohmann::ordered_json js;
                js["psnr"] = si->second.psnr;
                js["ssim"] = si->second.ssim;
                for (const auto& m : detail::scenario_metric_columns(scen, plugins)) {
                    if (m == "psnr" || m == "ssim") continue;
                    const auto pi = si->second.plugin_values.find(m);
                    if (pi != si->second.plugin_values.end())
                        js[m] = {{"value", pi->second.first}, {"plugin_version", pi->second.second}};
                    else
                        js[m] = {{"status", "absent"}};
                }
                jd[scen] = std::move(js);
            }
            jr[deg] = std::move(jd);
        }
        ji["results"] = std::move(jr);
        items.push_back(std::move(ji));
    }
    j["items"] = std::move(items);

    nlohmann::ordered_json agg;
    for (const auto& deg : report.degradations) {
        const auto di = report.aggregate.find(deg);
        nlohmann::ordered_json jd;
        if (di != report.aggregate.end()) {
            for (const auto& scen : report.scenarios) {
                const auto si = di->second.find(scen);
                if (si == di->second.end()) continue;
                nlohmann::ordered_json js;
                for (const auto& [name, mean] : si->second) js[name] = mean;
                jd[scen] = std::move(js);
            }
        }
        agg[deg] = std::move(jd);
    }
    j["aggregate"] = std::move(agg);
    return j;
}

}  // namespace stegakit
