#include "idforge/config.hpp"
#include "idforge/errors.hpp"
#include "idforge/io.hpp"
#include "idforge/pipeline.hpp"
#include "idforge/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace idforge;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
    std::string run_dir;
    std::string config_file;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool ci = false;
    std::string variants; // ablate only
    std::string seeds;    // ablate only
};

void emit_error(const std::string& category, const std::string& what) {
    nlohmann::json j;
    j["error"] = category;
    j["what"] = what;
    std::cerr << j.dump() << "\n";
}

const char* lookup_env(const std::string& name) { return std::getenv(name.c_str()); }

bool ci_mode(const CommonOpts& o) {
    if (o.ci) return true;
    const char* v = std::getenv("IDFORGE_CI");
    return v != nullptr && *v != '\0';
}

std::uint64_t timestamp_seed() {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(now).count());
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// Layers the config sources, then settles the master seed: an explicit
// --seed wins; otherwise a seed mentioned in any layer stands; otherwise a
// timestamp seed is drawn — unless CI mode, where a silent seed is an error.
PipelineConfig load_cli_config(const CommonOpts& o, const CLI::App* sub, bool require_seed) {
    std::string file_text;
    bool file_has_seed = false;
    if (!o.config_file.empty()) {
        try {
            file_text = read_text_file(o.config_file);
        } catch (const IoError& e) {
            throw UsageError(std::string("cannot read config file: ") + e.what());
        }
        try {
            file_has_seed = nlohmann::json::parse(file_text).contains("seed");
        } catch (const nlohmann::json::exception&) {
            // resolve_config reports the malformed file with a proper message
        }
    }

    std::vector<std::pair<std::string, std::string>> sets;
    bool set_has_seed = false;
    for (const std::string& kv : o.sets) {
        const auto pos = kv.find('=');
        if (pos == std::string::npos)
            throw UsageError("--set expects key=value, got '" + kv + "'");
        std::string key = kv.substr(0, pos);
        if (key == "seed") set_has_seed = true;
        sets.emplace_back(std::move(key), kv.substr(pos + 1));
    }

    PipelineConfig cfg = resolve_config(file_text, lookup_env, sets);
    const bool env_has_seed = std::getenv(env_name_for_key("seed").c_str()) != nullptr;
    if (sub->count("--seed") > 0) {
        cfg.seed = o.seed;
    } else if (require_seed && !file_has_seed && !env_has_seed && !set_has_seed) {
        if (ci_mode(o))
            throw UsageError("no seed provided; pass --seed explicitly (required in CI mode)");
        cfg.seed = timestamp_seed();
    }
    return cfg;
}

void echo_config(const PipelineConfig& cfg) {
    std::cout << "config: " << config_to_json(cfg).dump() << "\n";
}

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

int cmd_stage(const CommonOpts& o, const CLI::App* sub, const std::string& stage) {
    const PipelineConfig cfg = load_cli_config(o, sub, true);
    echo_config(cfg);
    const StageRecord rec = run_stage(cfg, o.run_dir, stage);
    std::cout << "stage " << stage << ": " << rec.status << " (" << fmt_g(rec.wall_ms)
              << " ms)\n";
    if (!rec.note.empty()) std::cout << "note: " << rec.note << "\n";
    for (const auto& [file, hash] : rec.outputs)
        std::cout << "wrote " << (fs::path(o.run_dir) / file).string() << " (" << hash << ")\n";
    return 0;
}

int cmd_run(const CommonOpts& o, const CLI::App* sub) {
    const PipelineConfig cfg = load_cli_config(o, sub, true);
    echo_config(cfg);
    const RunManifest manifest = run_full(cfg, o.run_dir);
    for (const std::string& stage : stage_order()) {
        const auto it = manifest.stages.find(stage);
        std::cout << "stage " << stage << ": "
                  << (it == manifest.stages.end() ? "absent" : it->second.status) << "\n";
    }
    const auto metrics = read_metrics_csv(fs::path(o.run_dir) / kMetricsCsvFile);
    std::cout << "closed_set_accuracy: " << fmt_g(metrics.at("closed_set_accuracy")) << "\n";
    std::cout << "novel_accuracy: " << fmt_g(metrics.at("novel_accuracy")) << "\n";
    std::cout << "run complete: " << o.run_dir << "\n";
    return 0;
}

int cmd_ablate(const CommonOpts& o, const CLI::App* sub) {
    const PipelineConfig base = load_cli_config(o, sub, false);
    echo_config(base);

    AblationSpec spec = default_ablation();
    if (!o.variants.empty()) spec.variants = split_commas(o.variants);
    if (!o.seeds.empty()) {
        spec.seeds.clear();
        for (const std::string& s : split_commas(o.seeds)) {
            try {
                std::size_t used = 0;
                spec.seeds.push_back(std::stoull(s, &used));
                if (used != s.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw UsageError("--seeds expects comma-separated integers, got '" + s + "'");
            }
        }
    }

    const AblationResult result = run_ablation(spec, base, o.run_dir);
    bool any_failed = false;
    for (const AblationCell& cell : result.cells) {
        if (cell.failed) {
            any_failed = true;
            std::cout << cell.variant << " seed=" << cell.seed << ": failed (" << cell.error
                      << ")\n";
        }
    }
    for (const AblationRow& row : result.rows) {
        std::cout << row.variant << ": runs=" << row.runs << " closed=" << fmt_g(row.mean_closed)
                  << "±" << fmt_g(row.std_closed) << " novel=" << fmt_g(row.mean_novel) << "±"
                  << fmt_g(row.std_novel) << "\n";
    }
    std::cout << "ablation table: " << (fs::path(o.run_dir) / kAblationSummaryFile).string()
              << "\n";
    if (any_failed) throw TrainingError("one or more ablation cells failed; see the cell table");
    return 0;
}

int cmd_report(const CommonOpts& o) {
    for (const std::string& file : write_report(o.run_dir))
        std::cout << "wrote " << (fs::path(o.run_dir) / file).string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"idforge: reward-guided synthetic identity data at desk scale"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    CommonOpts opts;
    const std::vector<std::string> stage_cmds = {"world", "pretrain", "coldstart", "rl",
                                                 "synth", "train",    "eval"};
    const std::vector<std::pair<std::string, std::string>> descriptions = {
        {"world", "generate the identity world and its data splits"},
        {"pretrain", "train the generic denoiser"},
        {"coldstart", "adapt the pretrained denoiser to the target identities"},
        {"rl", "reward-guided fine-tuning of the cold-start denoiser"},
        {"synth", "sample the synthetic augmentation pool"},
        {"train", "train the identity classifier"},
        {"eval", "evaluate the classifier on held-out and novel identities"},
        {"run", "run every stage in order (resumes completed stages)"},
        {"ablate", "run the component ablation matrix"},
        {"report", "render summary.txt and SVG charts from run artifacts"}};

    auto add_common = [&](CLI::App* sub, bool with_config) {
        sub->add_option("--run-dir", opts.run_dir, "artifact directory")->required();
        if (with_config) {
            sub->add_option("--config", opts.config_file, "config file (JSON)");
            sub->add_option("--set", opts.sets, "override, key=value (repeatable)");
            sub->add_option("--seed", opts.seed, "master seed");
            sub->add_flag("--ci", opts.ci, "fail instead of drawing a timestamp seed");
        }
    };

    for (const auto& [name, desc] : descriptions) {
        CLI::App* sub = app.add_subcommand(name, desc);
        add_common(sub, name != "report");
        if (name == "ablate") {
            sub->add_option("--variants", opts.variants,
                            "comma-separated variant names (default: accuracy ladder)");
            sub->add_option("--seeds", opts.seeds, "comma-separated seeds (default: 1..5)");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("usage", e.what());
        return kExitUsage;
    }

    const CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        if (name == "run") return cmd_run(opts, sub);
        if (name == "ablate") return cmd_ablate(opts, sub);
        if (name == "report") return cmd_report(opts);
        return cmd_stage(opts, sub, name);
    } catch (const UsageError& e) {
        emit_error("usage", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        emit_error("runtime", e.what());
        return kExitRuntime;
    } catch (const std::exception& e) {
        emit_error("runtime", e.what());
        return kExitRuntime;
    }
}
