#include "idforge/pipeline.hpp"

#include "idforge/diffusion.hpp"
#include "idforge/downstream.hpp"
#include "idforge/errors.hpp"
#include "idforge/rewards.hpp"
#include "idforge/rl.hpp"
#include "idforge/serialize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace fs = std::filesystem;

namespace idforge {

namespace {

constexpr int kManifestVersion = 1;
constexpr int kClassifierVersion = 1;

std::size_t synth_per_batch_identity(const PipelineConfig& cfg) {
    const auto n = static_cast<std::size_t>(
        std::llround(cfg.train.synth_ratio * static_cast<double>(cfg.train.samples_per_identity)));
    return std::min(n, cfg.train.samples_per_identity);
}

bool needs_synth(const PipelineConfig& cfg) { return synth_per_batch_identity(cfg) > 0; }

std::string run_id_for(const PipelineConfig& cfg) {
    return cfg.run_id.empty() ? "seed-" + std::to_string(cfg.seed) : cfg.run_id;
}

std::string config_hash_for(const nlohmann::json& config) {
    return hash_hex(fnv1a(config.dump()));
}

void write_csv(const fs::path& path, const CsvTable& table) {
    atomic_write_file(path, csv_to_string(table));
}

CsvTable loss_log_csv(const TrainLog& log, std::size_t log_every, std::size_t total_steps) {
    CsvTable t;
    t.header = {"step", "loss"};
    for (std::size_t i = 0; i < log.losses.size(); ++i)
        t.rows.push_back({std::to_string(i * log_every), format_double(log.losses[i])});
    t.rows.push_back({std::to_string(total_steps), format_double(log.final_loss)});
    return t;
}

double parse_metric_double(const std::string& text, const fs::path& file) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ProtocolError("non-numeric value '" + text + "' in " + file.string());
    }
}

// --- stage bodies (outputs returned as file names, hashed by the caller) --

std::vector<std::string> stage_world(const PipelineConfig& cfg, const fs::path& dir) {
    const IdentityWorld world = generate_world(cfg.world, stage_seed(cfg.seed, "world"));
    save_world(world, dir / kWorldFile);

    const WorldSplit split = split_world(world, cfg.data.holdout_ids);
    Rng data_rng(stage_seed(cfg.seed, "data"));
    auto draw = [&](const std::vector<std::size_t>& ids, std::size_t n, const std::string& label) {
        Rng r = data_rng.child(label);
        std::vector<LabeledSample> all;
        all.reserve(ids.size() * n);
        for (std::size_t y : ids) {
            auto s = sample_real(world, y, n, r);
            all.insert(all.end(), s.begin(), s.end());
        }
        return all;
    };
    save_samples(draw(split.seen_ids, cfg.data.real_per_identity, "train"), dir / kTrainDataFile);
    save_samples(draw(split.seen_ids, cfg.data.heldout_per_identity, "heldout"),
                 dir / kHeldoutDataFile);
    save_samples(draw(split.novel_ids, cfg.data.novel_exemplars, "novel_ex"),
                 dir / kNovelExemplarFile);
    save_samples(draw(split.novel_ids, cfg.data.novel_queries, "novel_q"),
                 dir / kNovelQueryFile);
    return {kWorldFile, kTrainDataFile, kHeldoutDataFile, kNovelExemplarFile, kNovelQueryFile};
}

std::vector<std::string> stage_pretrain(const PipelineConfig& cfg, const fs::path& dir) {
    const NoiseSchedule s =
        build_schedule(cfg.diffusion.timesteps, cfg.diffusion.beta_min, cfg.diffusion.beta_max);
    const PretrainResult res = pretrain_generic(cfg.pretrain, s, stage_seed(cfg.seed, "pretrain"));
    save_denoiser({res.net, s}, dir / kPretrainCkptFile);
    write_csv(dir / kPretrainLossFile,
              loss_log_csv(res.log, cfg.pretrain.log_every, cfg.pretrain.steps));
    return {kPretrainCkptFile, kPretrainLossFile};
}

std::vector<std::string> stage_coldstart(const PipelineConfig& cfg, const fs::path& dir) {
    const Denoiser d = load_denoiser(dir / kPretrainCkptFile);
    const auto data = load_samples(dir / kTrainDataFile);
    ColdStartConfig cc = cfg.coldstart;
    cc.num_classes = seen_identity_count(cfg);
    const ColdStartResult res =
        coldstart_init(d.net, data, cc, d.schedule, stage_seed(cfg.seed, "coldstart"));
    save_denoiser({res.net, d.schedule}, dir / kColdstartCkptFile);
    write_csv(dir / kColdstartLossFile, loss_log_csv(res.log, cc.log_every, cc.steps));
    return {kColdstartCkptFile, kColdstartLossFile};
}

std::vector<std::string> stage_rl(const PipelineConfig& cfg, const fs::path& dir,
                                  std::string* note) {
    const Denoiser d = load_denoiser(dir / kColdstartCkptFile);
    const auto data = load_samples(dir / kTrainDataFile);
    const FeatureExtractor extractor =
        make_feature_extractor(cfg.world.obs_dim, cfg.extractor.feat_dim,
                               cfg.extractor.hidden_dims, stage_seed(cfg.seed, "extractor"));
    std::map<std::size_t, std::vector<Vec>> by_id;
    for (const LabeledSample& s : data) by_id[s.y].push_back(extract_features(extractor, s.x));
    const MemoryBank bank = build_bank(by_id);

    RewardWeights w = cfg.rewards;
    if (!cfg.reward_sem_on) w.lambda_sem = 0.0;
    if (!cfg.reward_cov_on) w.lambda_cov = 0.0;
    if (!cfg.reward_exp_on) w.lambda_exp = 0.0;
    RlConfig rc = cfg.rl;
    rc.seed = stage_seed(cfg.seed, "rl");

    const RlResult res = rl_finetune(d.net, bank, extractor, w, rc, d.schedule);
    save_denoiser({res.net, d.schedule}, dir / kRlCkptFile);
    CsvTable t;
    t.header = rl_history_csv_header();
    for (const PolicyGradientReport& r : res.history) t.rows.push_back(rl_history_csv_row(r));
    write_csv(dir / kRlHistoryFile, t);
    if (res.aborted) *note = "aborted: " + res.abort_reason;
    return {kRlCkptFile, kRlHistoryFile};
}

std::vector<std::string> stage_synth(const PipelineConfig& cfg, const fs::path& dir) {
    const fs::path src = dir / (cfg.rl_enabled ? kRlCkptFile : kColdstartCkptFile);
    const Denoiser d = load_denoiser(src);
    const std::size_t per_id = cfg.synth_per_identity > 0 ? cfg.synth_per_identity
                                                          : 4 * cfg.data.real_per_identity;
    Rng root(stage_seed(cfg.seed, "synth"));
    std::vector<LabeledSample> pool;
    const std::size_t seen = seen_identity_count(cfg);
    pool.reserve(seen * per_id);
    for (std::size_t y = 0; y < seen; ++y) {
        for (std::size_t i = 0; i < per_id; ++i) {
            Rng traj_rng = root.child("traj", y * per_id + i);
            Trajectory traj = sample_trajectory(d.net, y, d.schedule, traj_rng);
            pool.push_back({traj.x0(), y, Origin::Synthetic});
        }
    }
    save_samples(pool, dir / kSynthDataFile);
    return {kSynthDataFile};
}

std::vector<std::string> stage_train(const PipelineConfig& cfg, const fs::path& dir) {
    const auto real = load_samples(dir / kTrainDataFile);
    std::vector<LabeledSample> synth;
    if (needs_synth(cfg)) synth = load_samples(dir / kSynthDataFile);
    EvalData eval;
    eval.heldout_seen = load_samples(dir / kHeldoutDataFile);
    eval.novel_exemplars = load_samples(dir / kNovelExemplarFile);
    eval.novel_queries = load_samples(dir / kNovelQueryFile);

    TrainConfig tc = cfg.train;
    tc.seed = stage_seed(cfg.seed, "train");
    const TrainResult res = train_classifier(real, synth, seen_identity_count(cfg), tc, &eval);
    save_classifier(res.model, dir / kClassifierCkptFile);

    CsvTable curve;
    curve.header = train_curve_csv_header();
    for (const CurvePoint& p : res.curve) curve.rows.push_back(train_curve_csv_row(p));
    write_csv(dir / kTrainCurveFile, curve);

    CsvTable sel;
    sel.header = selection_csv_header();
    for (const StepSelection& s : res.selections) {
        auto rows = selection_csv_rows(s);
        sel.rows.insert(sel.rows.end(), rows.begin(), rows.end());
    }
    write_csv(dir / kSelectionLogFile, sel);

    CsvTable snaps;
    snaps.header = {"step", "closed_set_accuracy", "novel_accuracy"};
    for (const EvalSnapshot& s : res.evals)
        snaps.rows.push_back({std::to_string(s.step), format_double(s.report.closed_set_accuracy),
                              format_double(s.report.novel_accuracy)});
    write_csv(dir / kEvalSnapshotFile, snaps);
    return {kClassifierCkptFile, kTrainCurveFile, kSelectionLogFile, kEvalSnapshotFile};
}

std::vector<std::string> stage_eval(const PipelineConfig& cfg, const fs::path& dir) {
    (void)cfg;
    const Mlp model = load_classifier(dir / kClassifierCkptFile);
    const EvalReport rep =
        evaluate(model, load_samples(dir / kHeldoutDataFile),
                 load_samples(dir / kNovelExemplarFile), load_samples(dir / kNovelQueryFile));

    CsvTable t;
    t.header = {"metric", "value"};
    t.rows.push_back({"closed_set_accuracy", format_double(rep.closed_set_accuracy)});
    t.rows.push_back({"novel_accuracy", format_double(rep.novel_accuracy)});
    for (const auto& [y, acc] : rep.per_identity_accuracy)
        t.rows.push_back({"accuracy_id_" + std::to_string(y), format_double(acc)});
    write_csv(dir / kMetricsCsvFile, t);

    nlohmann::json j;
    j["version"] = 1;
    j["closed_set_accuracy"] = rep.closed_set_accuracy;
    j["novel_accuracy"] = rep.novel_accuracy;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [y, acc] : rep.per_identity_accuracy) per[std::to_string(y)] = acc;
    j["per_identity_accuracy"] = std::move(per);
    atomic_write_file(dir / kMetricsJsonFile, j.dump(2) + "\n");
    return {kMetricsCsvFile, kMetricsJsonFile};
}

std::vector<std::string> stage_prerequisites(const PipelineConfig& cfg, const std::string& stage) {
    if (stage == "world" || stage == "pretrain") return {};
    if (stage == "coldstart") return {kPretrainCkptFile, kTrainDataFile};
    if (stage == "rl") return {kColdstartCkptFile, kTrainDataFile};
    if (stage == "synth")
        return {cfg.rl_enabled ? kRlCkptFile : kColdstartCkptFile};
    if (stage == "train") {
        std::vector<std::string> p = {kTrainDataFile, kHeldoutDataFile, kNovelExemplarFile,
                                      kNovelQueryFile};
        if (needs_synth(cfg)) p.push_back(kSynthDataFile);
        return p;
    }
    if (stage == "eval")
        return {kClassifierCkptFile, kHeldoutDataFile, kNovelExemplarFile, kNovelQueryFile};
    throw UsageError("unknown stage '" + stage + "'");
}

StageRecord execute_stage(const PipelineConfig& cfg, const fs::path& dir,
                          const std::string& stage) {
    const auto t0 = std::chrono::steady_clock::now();
    StageRecord rec;
    std::vector<std::string> files;
    if (stage == "world") files = stage_world(cfg, dir);
    else if (stage == "pretrain") files = stage_pretrain(cfg, dir);
    else if (stage == "coldstart") files = stage_coldstart(cfg, dir);
    else if (stage == "rl") files = stage_rl(cfg, dir, &rec.note);
    else if (stage == "synth") files = stage_synth(cfg, dir);
    else if (stage == "train") files = stage_train(cfg, dir);
    else if (stage == "eval") files = stage_eval(cfg, dir);
    else throw UsageError("unknown stage '" + stage + "'");

    rec.status = "complete";
    for (const std::string& f : files) rec.outputs.emplace_back(f, hash_hex(hash_file(dir / f)));
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    return rec;
}

bool outputs_intact(const fs::path& dir, const StageRecord& rec) {
    for (const auto& [file, hash] : rec.outputs) {
        const fs::path p = dir / file;
        if (!fs::exists(p) || hash_hex(hash_file(p)) != hash) return false;
    }
    return true;
}

RunManifest load_or_init_manifest(const PipelineConfig& cfg, const fs::path& dir) {
    const nlohmann::json config = config_to_json(cfg);
    const std::string hash = config_hash_for(config);
    if (fs::exists(dir / kManifestFile)) {
        RunManifest m = load_manifest(dir);
        if (m.config_hash != hash) {
            throw ProtocolError("run directory was created with a different configuration");
        }
        return m;
    }
    RunManifest m;
    m.run_id = run_id_for(cfg);
    m.seed = cfg.seed;
    m.config = config;
    m.config_hash = hash;
    return m;
}

} // namespace

std::string manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["version"] = kManifestVersion;
    j["tool"] = kToolVersion;
    j["run_id"] = m.run_id;
    j["seed"] = m.seed;
    j["config"] = m.config;
    j["config_hash"] = m.config_hash;
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [name, rec] : m.stages) {
        nlohmann::json outputs = nlohmann::json::array();
        for (const auto& [file, hash] : rec.outputs)
            outputs.push_back({{"file", file}, {"hash", hash}});
        stages[name] = {{"status", rec.status},
                        {"wall_ms", rec.wall_ms},
                        {"note", rec.note},
                        {"outputs", std::move(outputs)}};
    }
    j["stages"] = std::move(stages);
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!j.contains("version") || j["version"].get<int>() != kManifestVersion)
        throw ProtocolError("manifest version is not supported");
    try {
        RunManifest m;
        m.run_id = j.at("run_id").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config = j.at("config");
        m.config_hash = j.at("config_hash").get<std::string>();
        for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it) {
            StageRecord rec;
            rec.status = it.value().at("status").get<std::string>();
            rec.wall_ms = it.value().at("wall_ms").get<double>();
            rec.note = it.value().at("note").get<std::string>();
            for (const auto& o : it.value().at("outputs"))
                rec.outputs.emplace_back(o.at("file").get<std::string>(),
                                         o.at("hash").get<std::string>());
            m.stages[it.key()] = std::move(rec);
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("manifest is missing fields: ") + e.what());
    }
}

void save_manifest(const RunManifest& m, const fs::path& dir) {
    atomic_write_file(dir / kManifestFile, manifest_to_json(m));
}

RunManifest load_manifest(const fs::path& dir) {
    return manifest_from_json(read_text_file(dir / kManifestFile));
}

CsvTable samples_to_csv(const std::vector<LabeledSample>& samples) {
    CsvTable t;
    const std::size_t dim = samples.empty() ? 0 : samples.front().x.size();
    t.header = {"y", "origin"};
    for (std::size_t i = 0; i < dim; ++i) t.header.push_back("x" + std::to_string(i));
    for (const LabeledSample& s : samples) {
        if (s.x.size() != dim) throw DimensionError("samples_to_csv: ragged sample dimensions");
        std::vector<std::string> row = {std::to_string(s.y),
                                        s.origin == Origin::Real ? "real" : "synthetic"};
        for (double v : s.x) row.push_back(format_double(v));
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::vector<LabeledSample> samples_from_csv(const CsvTable& table) {
    if (table.header.size() < 2 || table.header[0] != "y" || table.header[1] != "origin")
        throw ProtocolError("sample table must start with columns y, origin");
    for (std::size_t i = 2; i < table.header.size(); ++i) {
        if (table.header[i] != "x" + std::to_string(i - 2))
            throw ProtocolError("sample table has unexpected column '" + table.header[i] + "'");
    }
    std::vector<LabeledSample> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        LabeledSample s;
        try {
            std::size_t used = 0;
            s.y = std::stoull(row.at(0), &used);
            if (used != row.at(0).size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ProtocolError("sample table has non-integer label '" + row.at(0) + "'");
        }
        if (row.at(1) == "real") s.origin = Origin::Real;
        else if (row.at(1) == "synthetic") s.origin = Origin::Synthetic;
        else throw ProtocolError("sample table has unknown origin '" + row.at(1) + "'");
        for (std::size_t i = 2; i < row.size(); ++i) {
            try {
                std::size_t used = 0;
                s.x.push_back(std::stod(row[i], &used));
                if (used != row[i].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ProtocolError("sample table has non-numeric value '" + row[i] + "'");
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

void save_samples(const std::vector<LabeledSample>& samples, const fs::path& path) {
    atomic_write_file(path, csv_to_string(samples_to_csv(samples)));
}

std::vector<LabeledSample> load_samples(const fs::path& path) {
    return samples_from_csv(csv_from_string(read_text_file(path)));
}

void save_classifier(const Mlp& net, const fs::path& path) {
    nlohmann::json j;
    j["version"] = kClassifierVersion;
    j["net"] = mlp_to_json_obj(net);
    atomic_write_file(path, j.dump(2) + "\n");
}

Mlp load_classifier(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("classifier checkpoint is not valid JSON: ") + e.what());
    }
    if (!j.contains("version") || j["version"].get<int>() != kClassifierVersion)
        throw ProtocolError("classifier checkpoint version is not supported");
    try {
        Rng uid_source(fnv1a("classifier"));
        return mlp_from_json_obj(j.at("net"), uid_source);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("classifier checkpoint is missing fields: ") + e.what());
    }
}

std::uint64_t stage_seed(std::uint64_t master, const std::string& stage) {
    return Rng(master).child(stage).seed();
}

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {"world", "pretrain", "coldstart", "rl",
                                                   "synth",  "train",   "eval"};
    return order;
}

bool stage_skipped(const PipelineConfig& cfg, const std::string& stage) {
    if (stage == "pretrain" || stage == "coldstart" || stage == "synth")
        return !needs_synth(cfg);
    if (stage == "rl") return !needs_synth(cfg) || !cfg.rl_enabled;
    return false;
}

std::size_t seen_identity_count(const PipelineConfig& cfg) {
    return cfg.world.num_identities - cfg.data.holdout_ids;
}

void validate_pipeline_config(const PipelineConfig& cfg) {
    if (cfg.data.holdout_ids == 0)
        throw ArgumentError("config: data.holdout_ids must be >= 1 for the novel protocol");
    if (cfg.data.holdout_ids + 2 > cfg.world.num_identities)
        throw ArgumentError("config: need at least two seen identities after the holdout");
    if (cfg.world.obs_dim != cfg.pretrain.world.obs_dim)
        throw ArgumentError("config: target and generic worlds must share obs_dim");
    if (cfg.data.real_per_identity < 2)
        throw ArgumentError("config: data.real_per_identity must be >= 2");
    if (cfg.diffusion.timesteps < 2)
        throw ArgumentError("config: diffusion.timesteps must be >= 2");
    if (cfg.data.novel_exemplars == 0 || cfg.data.novel_queries == 0)
        throw ArgumentError("config: novel exemplar and query counts must be >= 1");
}

StageRecord run_stage(const PipelineConfig& cfg, const fs::path& dir, const std::string& stage) {
    validate_pipeline_config(cfg);
    if (std::find(stage_order().begin(), stage_order().end(), stage) == stage_order().end())
        throw UsageError("unknown stage '" + stage + "'");
    for (const std::string& pre : stage_prerequisites(cfg, stage)) {
        if (!fs::exists(dir / pre))
            throw UsageError("stage '" + stage + "' needs missing input artifact '" + pre + "'");
    }
    fs::create_directories(dir);
    RunManifest m = load_or_init_manifest(cfg, dir);
    const StageRecord rec = execute_stage(cfg, dir, stage);
    m.stages[stage] = rec;
    save_manifest(m, dir);
    return rec;
}

RunManifest run_full(const PipelineConfig& cfg, const fs::path& dir) {
    validate_pipeline_config(cfg);
    fs::create_directories(dir);
    RunManifest m = load_or_init_manifest(cfg, dir);
    for (const std::string& stage : stage_order()) {
        if (stage_skipped(cfg, stage)) {
            StageRecord rec;
            rec.status = "skipped";
            m.stages[stage] = rec;
            save_manifest(m, dir);
            continue;
        }
        if (auto it = m.stages.find(stage);
            it != m.stages.end() && it->second.status == "complete" &&
            outputs_intact(dir, it->second)) {
            continue;
        }
        try {
            m.stages[stage] = execute_stage(cfg, dir, stage);
            save_manifest(m, dir);
        } catch (const Error& e) {
            StageRecord rec;
            rec.status = "failed";
            rec.note = e.what();
            m.stages[stage] = rec;
            save_manifest(m, dir);
            throw;
        }
    }
    save_manifest(m, dir);
    return m;
}

std::map<std::string, double> read_metrics_csv(const fs::path& path) {
    const CsvTable t = csv_from_string(read_text_file(path));
    if (t.header != std::vector<std::string>{"metric", "value"})
        throw ProtocolError("metrics file has an unexpected header: " + path.string());
    std::map<std::string, double> out;
    for (const auto& row : t.rows) out[row.at(0)] = parse_metric_double(row.at(1), path);
    return out;
}

std::vector<std::string> known_variants() {
    return {"real-only", "cs-synth", "cs-dss", "full", "full-dss", "no-sem", "no-cov", "no-exp"};
}

PipelineConfig apply_variant(const PipelineConfig& base, const std::string& variant) {
    PipelineConfig c = base;
    if (variant == "real-only") {
        c.train.synth_ratio = 0.0;
        c.train.use_selector = false;
        c.rl_enabled = false;
    } else if (variant == "cs-synth") {
        c.rl_enabled = false;
        c.train.use_selector = false;
    } else if (variant == "cs-dss") {
        c.rl_enabled = false;
        c.train.use_selector = true;
    } else if (variant == "full") {
        c.rl_enabled = true;
        c.train.use_selector = false;
    } else if (variant == "full-dss") {
        c.rl_enabled = true;
        c.train.use_selector = true;
    } else if (variant == "no-sem") {
        c.rl_enabled = true;
        c.train.use_selector = true;
        c.reward_sem_on = false;
    } else if (variant == "no-cov") {
        c.rl_enabled = true;
        c.train.use_selector = true;
        c.reward_cov_on = false;
    } else if (variant == "no-exp") {
        c.rl_enabled = true;
        c.train.use_selector = true;
        c.reward_exp_on = false;
    } else {
        throw ArgumentError("unknown ablation variant '" + variant + "'");
    }
    c.run_id = variant + "-seed-" + std::to_string(c.seed);
    return c;
}

AblationSpec default_ablation() {
    return {{"real-only", "cs-synth", "cs-dss", "full-dss"}, {1, 2, 3, 4, 5}};
}

AblationResult run_ablation(const AblationSpec& spec, const PipelineConfig& base,
                            const fs::path& root) {
    if (spec.seeds.empty()) throw ArgumentError("run_ablation: need at least one seed");
    if (spec.variants.empty()) throw ArgumentError("run_ablation: need at least one variant");
    for (const std::string& v : spec.variants) apply_variant(base, v); // validate upfront

    fs::create_directories(root);
    AblationResult result;
    for (const std::string& variant : spec.variants) {
        for (std::uint64_t seed : spec.seeds) {
            PipelineConfig c = base;
            c.seed = seed;
            c = apply_variant(c, variant);
            AblationCell cell;
            cell.variant = variant;
            cell.seed = seed;
            const fs::path dir = root / variant / ("seed-" + std::to_string(seed));
            try {
                run_full(c, dir);
                const auto metrics = read_metrics_csv(dir / kMetricsCsvFile);
                cell.closed_set = metrics.at("closed_set_accuracy");
                cell.novel = metrics.at("novel_accuracy");
            } catch (const Error& e) {
                cell.failed = true;
                cell.error = e.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }

    for (const std::string& variant : spec.variants) {
        AblationRow row;
        row.variant = variant;
        Vec closed, novel;
        for (const AblationCell& cell : result.cells) {
            if (cell.variant != variant || cell.failed) continue;
            closed.push_back(cell.closed_set);
            novel.push_back(cell.novel);
        }
        row.runs = closed.size();
        auto mean_std = [](const Vec& v) -> std::pair<double, double> {
            if (v.empty()) return {0.0, 0.0};
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            if (v.size() < 2) return {mean, 0.0};
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
        };
        std::tie(row.mean_closed, row.std_closed) = mean_std(closed);
        std::tie(row.mean_novel, row.std_novel) = mean_std(novel);
        result.rows.push_back(std::move(row));
    }

    CsvTable cells;
    cells.header = {"variant", "seed", "status", "closed_set_accuracy", "novel_accuracy",
                    "error"};
    for (const AblationCell& cell : result.cells) {
        cells.rows.push_back({cell.variant, std::to_string(cell.seed),
                              cell.failed ? "failed" : "ok",
                              cell.failed ? "" : format_double(cell.closed_set),
                              cell.failed ? "" : format_double(cell.novel), cell.error});
    }
    write_csv(root / kAblationCellsFile, cells);

    CsvTable rows;
    rows.header = {"variant", "runs", "mean_closed", "std_closed", "mean_novel", "std_novel"};
    for (const AblationRow& row : result.rows) {
        rows.rows.push_back({row.variant, std::to_string(row.runs), format_double(row.mean_closed),
                             format_double(row.std_closed), format_double(row.mean_novel),
                             format_double(row.std_novel)});
    }
    write_csv(root / kAblationSummaryFile, rows);
    return result;
}

} // namespace idforge
