#pragma once

#include "idforge/config.hpp"
#include "idforge/io.hpp"
#include "idforge/world.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace idforge {

inline constexpr const char* kToolVersion = "idforge 0.1.0";

// Fixed artifact names under a run directory.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWorldFile = "world.json";
inline constexpr const char* kTrainDataFile = "data_train.csv";
inline constexpr const char* kHeldoutDataFile = "data_heldout.csv";
inline constexpr const char* kNovelExemplarFile = "data_novel_exemplars.csv";
inline constexpr const char* kNovelQueryFile = "data_novel_queries.csv";
inline constexpr const char* kPretrainCkptFile = "pretrain.json";
inline constexpr const char* kPretrainLossFile = "pretrain_loss.csv";
inline constexpr const char* kColdstartCkptFile = "coldstart.json";
inline constexpr const char* kColdstartLossFile = "coldstart_loss.csv";
inline constexpr const char* kRlCkptFile = "rl.json";
inline constexpr const char* kRlHistoryFile = "rl_history.csv";
inline constexpr const char* kSynthDataFile = "synth.csv";
inline constexpr const char* kClassifierCkptFile = "classifier.json";
inline constexpr const char* kTrainCurveFile = "train_curve.csv";
inline constexpr const char* kSelectionLogFile = "selection.csv";
inline constexpr const char* kEvalSnapshotFile = "eval_snapshots.csv";
inline constexpr const char* kMetricsCsvFile = "metrics.csv";
inline constexpr const char* kMetricsJsonFile = "metrics.json";
inline constexpr const char* kAblationCellsFile = "ablation.csv";
inline constexpr const char* kAblationSummaryFile = "ablation_summary.csv";

struct StageRecord {
    std::string status; // "complete" | "skipped" | "failed"
    std::vector<std::pair<std::string, std::string>> outputs; // file name -> fnv1a hex
    double wall_ms = 0.0;
    std::string note;
};

struct RunManifest {
    std::string run_id;
    std::uint64_t seed = 0;
    nlohmann::json config; // fully resolved echo
    std::string config_hash;
    std::map<std::string, StageRecord> stages;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);
void save_manifest(const RunManifest& m, const std::filesystem::path& dir);
RunManifest load_manifest(const std::filesystem::path& dir);

// Sample pools as CSV: y, origin, x0..x{d-1}; doubles round-trip bit-exactly.
CsvTable samples_to_csv(const std::vector<LabeledSample>& samples);
std::vector<LabeledSample> samples_from_csv(const CsvTable& table);
void save_samples(const std::vector<LabeledSample>& samples, const std::filesystem::path& path);
std::vector<LabeledSample> load_samples(const std::filesystem::path& path);

void save_classifier(const Mlp& net, const std::filesystem::path& path);
Mlp load_classifier(const std::filesystem::path& path);

// Per-stage stream derived from the master seed by label, so a stage rerun
// does not depend on what ran before it.
std::uint64_t stage_seed(std::uint64_t master, const std::string& stage);

const std::vector<std::string>& stage_order();

// True when the configuration never consumes this stage's outputs.
bool stage_skipped(const PipelineConfig& cfg, const std::string& stage);

std::size_t seen_identity_count(const PipelineConfig& cfg);

// Rejects configurations whose stages cannot agree (dimension mismatches,
// empty splits, degenerate schedules).
void validate_pipeline_config(const PipelineConfig& cfg);

// Executes one stage into dir. Missing prerequisite artifacts -> UsageError.
// Updates the manifest on disk.
StageRecord run_stage(const PipelineConfig& cfg, const std::filesystem::path& dir,
                      const std::string& stage);

// All stages in order. Completed stages (verified by output hashes) are not
// re-run, so an interrupted run resumes exactly. On stage failure the
// manifest records the failure and the error propagates.
RunManifest run_full(const PipelineConfig& cfg, const std::filesystem::path& dir);

std::map<std::string, double> read_metrics_csv(const std::filesystem::path& path);

// --- ablation ----------------------------------------------------------

std::vector<std::string> known_variants();

// Applies a named toggle combination; also stamps run_id from the variant
// and the seed already present in the config.
PipelineConfig apply_variant(const PipelineConfig& base, const std::string& variant);

struct AblationSpec {
    std::vector<std::string> variants; // ordered; each from known_variants()
    std::vector<std::uint64_t> seeds;
};

AblationSpec default_ablation();

struct AblationCell {
    std::string variant;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    double closed_set = 0.0;
    double novel = 0.0;
};

struct AblationRow {
    std::string variant;
    std::size_t runs = 0; // successful cells
    double mean_closed = 0.0;
    double std_closed = 0.0;
    double mean_novel = 0.0;
    double std_novel = 0.0;
};

struct AblationResult {
    std::vector<AblationCell> cells;
    std::vector<AblationRow> rows;
};

// One full run per (variant, seed) under root/<variant>/seed-<n>; failures
// mark the cell and the sweep continues. Writes ablation.csv and
// ablation_summary.csv under root.
AblationResult run_ablation(const AblationSpec& spec, const PipelineConfig& base,
                            const std::filesystem::path& root);

} // namespace idforge
