#pragma once

#include "idforge/mlp.hpp"
#include "idforge/rng.hpp"
#include "idforge/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace idforge {

enum class Origin { Real, Synthetic };

struct LabeledSample {
    Vec x;
    std::size_t y = 0;
    Origin origin = Origin::Real;
};

// One fixed axis of intra-class variation (pose/illumination analog).
struct NuisanceDir {
    Vec direction; // unit norm
    double magnitude = 0.0;
};

struct IdentitySpec {
    Vec center;
    double spread = 0.0;
    std::vector<NuisanceDir> nuisances;
};

// Ground-truth generative world the "real" data is drawn from. Read-only
// after construction.
struct IdentityWorld {
    std::size_t obs_dim = 0;
    std::vector<IdentitySpec> identities;
    std::uint64_t seed = 0;

    std::size_t num_identities() const { return identities.size(); }
};

struct WorldConfig {
    std::size_t num_identities = 10;
    std::size_t obs_dim = 8;
    double min_separation = 2.5;
    double center_box = 4.0; // centers drawn uniformly from [-box, box]^d
    double spread_min = 0.45;
    double spread_max = 0.75;
    std::size_t nuisance_count = 2;
    double nuisance_magnitude_factor = 0.5; // times the identity's spread
};

// Rejection-samples centers until all pairs clear min_separation; throws
// GenerationError when the box is too tight for that to terminate.
IdentityWorld generate_world(const WorldConfig& config, std::uint64_t seed);

// x = center_y + spread_y * z + sum_k magnitude_k * direction_k * g_k.
std::vector<LabeledSample> sample_real(const IdentityWorld& world, std::size_t y, std::size_t n,
                                       Rng& rng);

// Frozen random backbone standing in for the recognition network that
// produces reward features. Never trained.
struct FeatureExtractor {
    Mlp net;
    bool normalize_output = true;

    std::size_t obs_dim() const { return net.input_dim(); }
    std::size_t feat_dim() const { return net.output_dim(); }
};

FeatureExtractor make_feature_extractor(std::size_t obs_dim, std::size_t feat_dim,
                                        const std::vector<std::size_t>& hidden_dims,
                                        std::uint64_t seed, bool normalize_output = true);

Vec extract_features(const FeatureExtractor& extractor, const Vec& x);
std::vector<Vec> extract_features(const FeatureExtractor& extractor, const std::vector<Vec>& xs);

struct WorldSplit {
    std::vector<std::size_t> seen_ids;
    std::vector<std::size_t> novel_ids;
};

// Deterministic partition: the last holdout_ids labels become the novel set.
WorldSplit split_world(const IdentityWorld& world, std::size_t holdout_ids);

std::string world_to_json(const IdentityWorld& world);
IdentityWorld world_from_json(const std::string& text);
void save_world(const IdentityWorld& world, const std::filesystem::path& path);
IdentityWorld load_world(const std::filesystem::path& path);

} // namespace idforge
