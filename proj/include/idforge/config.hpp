#pragma once

#include "idforge/diffusion.hpp"
#include "idforge/downstream.hpp"
#include "idforge/rewards.hpp"
#include "idforge/rl.hpp"
#include "idforge/world.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace idforge {

// Everything a run needs, defaults materialized. Keys below mirror the
// dotted paths accepted by config files, IDFORGE_* environment variables,
// and --set overrides.

struct DataConfig {
    std::size_t holdout_ids = 3;          // novel identities held out of training
    std::size_t real_per_identity = 8;    // scarce real pool per seen identity
    std::size_t heldout_per_identity = 16;
    std::size_t novel_exemplars = 4;
    std::size_t novel_queries = 16;
};

struct ExtractorConfig {
    std::size_t feat_dim = 16;
    std::vector<std::size_t> hidden_dims = {64};
};

struct DiffusionConfig {
    std::size_t timesteps = 50;
    double beta_min = 0.02;
    double beta_max = 0.25;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::string run_id; // empty -> "seed-<seed>"

    WorldConfig world;          // the scarce target world
    DataConfig data;
    ExtractorConfig extractor;
    DiffusionConfig diffusion;
    PretrainConfig pretrain;    // carries the broad generic world + arch
    ColdStartConfig coldstart;  // num_classes resolved from the split at runtime
    bool rl_enabled = true;
    RlConfig rl;                // rl.seed resolved from the master seed
    RewardWeights rewards;
    bool reward_sem_on = true;
    bool reward_cov_on = true;
    bool reward_exp_on = true;
    std::size_t synth_per_identity = 0; // 0 -> 4x real_per_identity
    TrainConfig train;                  // train.seed resolved from the master seed
};

PipelineConfig default_config();

// All recognized dotted keys, in registry order.
std::vector<std::string> config_keys();

nlohmann::json config_to_json(const PipelineConfig& cfg);

// Strict: any key in the document that is not in the registry is an error.
PipelineConfig config_from_json(const nlohmann::json& doc);

// Sets one value from its string form ("rl.steps", "250"). Lists are
// comma-separated. Unknown key or unparsable value -> UsageError.
void apply_override(PipelineConfig& cfg, const std::string& key, const std::string& value);

// Environment variable for a key: IDFORGE_ + upper-case key, dots as
// underscores ("rl.steps" -> IDFORGE_RL_STEPS).
std::string env_name_for_key(const std::string& key);

// Applies every IDFORGE_* variable the lookup function reports. The lookup
// is injected so tests do not have to mutate the process environment.
void apply_env_overrides(PipelineConfig& cfg,
                         const std::function<const char*(const std::string&)>& getenv_fn);

// Layering: defaults <- config file (optional) <- env <- --set pairs.
PipelineConfig resolve_config(const std::string& file_text_or_empty,
                              const std::function<const char*(const std::string&)>& getenv_fn,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

} // namespace idforge
