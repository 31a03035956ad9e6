#include "idforge/world.hpp"

#include "idforge/io.hpp"

#include <json.hpp>

#include <cmath>

namespace idforge {

namespace {
constexpr int kWorldFormatVersion = 1;
constexpr std::size_t kCenterRetries = 10000;
} // namespace

IdentityWorld generate_world(const WorldConfig& config, std::uint64_t seed) {
    if (config.num_identities < 2) throw ArgumentError("generate_world: need >= 2 identities");
    if (config.obs_dim < 2) throw ArgumentError("generate_world: need obs_dim >= 2");
    if (config.spread_min <= 0.0 || config.spread_max < config.spread_min) {
        throw ArgumentError("generate_world: bad spread range");
    }

    IdentityWorld world;
    world.obs_dim = config.obs_dim;
    world.seed = seed;
    world.identities.reserve(config.num_identities);

    Rng root(seed);
    Rng center_rng = root.child("centers");
    Rng spread_rng = root.child("spreads");
    Rng nuisance_rng = root.child("nuisances");

    for (std::size_t id = 0; id < config.num_identities; ++id) {
        Vec center(config.obs_dim);
        bool placed = false;
        for (std::size_t attempt = 0; attempt < kCenterRetries && !placed; ++attempt) {
            for (auto& c : center) {
                c = config.center_box * (2.0 * center_rng.uniform() - 1.0);
            }
            placed = true;
            for (const auto& prev : world.identities) {
                if (std::sqrt(sq_dist(center, prev.center)) < config.min_separation) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) {
            throw GenerationError("generate_world: could not satisfy min_separation for identity " +
                                  std::to_string(id));
        }

        IdentitySpec spec;
        spec.center = std::move(center);
        spec.spread = config.spread_min +
                      (config.spread_max - config.spread_min) * spread_rng.uniform();
        for (std::size_t k = 0; k < config.nuisance_count; ++k) {
            NuisanceDir nd;
            nd.direction = normalized(nuisance_rng.normal_vec(config.obs_dim));
            nd.magnitude = config.nuisance_magnitude_factor * spec.spread;
            spec.nuisances.push_back(std::move(nd));
        }
        world.identities.push_back(std::move(spec));
    }
    return world;
}

std::vector<LabeledSample> sample_real(const IdentityWorld& world, std::size_t y, std::size_t n,
                                       Rng& rng) {
    if (y >= world.num_identities()) throw LabelError("sample_real: unknown identity");
    if (n < 1) throw ArgumentError("sample_real: n must be >= 1");
    const IdentitySpec& spec = world.identities[y];

    std::vector<LabeledSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec x = spec.center;
        const Vec z = rng.normal_vec(world.obs_dim);
        axpy_into(x, spec.spread, z);
        for (const auto& nd : spec.nuisances) {
            axpy_into(x, nd.magnitude * rng.normal(), nd.direction);
        }
        out.push_back({std::move(x), y, Origin::Real});
    }
    return out;
}

FeatureExtractor make_feature_extractor(std::size_t obs_dim, std::size_t feat_dim,
                                        const std::vector<std::size_t>& hidden_dims,
                                        std::uint64_t seed, bool normalize_output) {
    std::vector<std::size_t> dims;
    dims.push_back(obs_dim);
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(feat_dim);
    Rng rng = Rng(seed).child("extractor");
    FeatureExtractor ex;
    ex.net = make_mlp(dims, Activation::Tanh, Activation::Identity, rng);
    ex.normalize_output = normalize_output;
    return ex;
}

Vec extract_features(const FeatureExtractor& extractor, const Vec& x) {
    Vec f = mlp_forward(extractor.net, x);
    if (extractor.normalize_output) f = normalized(f);
    return f;
}

std::vector<Vec> extract_features(const FeatureExtractor& extractor, const std::vector<Vec>& xs) {
    std::vector<Vec> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(extract_features(extractor, x));
    return out;
}

WorldSplit split_world(const IdentityWorld& world, std::size_t holdout_ids) {
    if (holdout_ids >= world.num_identities()) {
        throw ArgumentError("split_world: holdout must leave at least one seen identity");
    }
    WorldSplit split;
    const std::size_t seen = world.num_identities() - holdout_ids;
    for (std::size_t id = 0; id < seen; ++id) split.seen_ids.push_back(id);
    for (std::size_t id = seen; id < world.num_identities(); ++id) split.novel_ids.push_back(id);
    return split;
}

std::string world_to_json(const IdentityWorld& world) {
    nlohmann::json j;
    j["version"] = kWorldFormatVersion;
    j["seed"] = world.seed;
    j["obs_dim"] = world.obs_dim;
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& spec : world.identities) {
        nlohmann::json id;
        id["center"] = spec.center;
        id["spread"] = spec.spread;
        nlohmann::json nds = nlohmann::json::array();
        for (const auto& nd : spec.nuisances) {
            nds.push_back({{"direction", nd.direction}, {"magnitude", nd.magnitude}});
        }
        id["nuisances"] = std::move(nds);
        ids.push_back(std::move(id));
    }
    j["identities"] = std::move(ids);
    return j.dump(2) + "\n";
}

IdentityWorld world_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("world file is not valid JSON: ") + e.what());
    }
    if (!j.contains("version") || j["version"].get<int>() != kWorldFormatVersion) {
        throw ProtocolError("world file version is not supported");
    }
    try {
        IdentityWorld world;
        world.seed = j.at("seed").get<std::uint64_t>();
        world.obs_dim = j.at("obs_dim").get<std::size_t>();
        for (const auto& id : j.at("identities")) {
            IdentitySpec spec;
            spec.center = id.at("center").get<Vec>();
            spec.spread = id.at("spread").get<double>();
            for (const auto& nd : id.at("nuisances")) {
                spec.nuisances.push_back(
                    {nd.at("direction").get<Vec>(), nd.at("magnitude").get<double>()});
            }
            if (spec.center.size() != world.obs_dim) {
                throw ProtocolError("world file center dimension mismatch");
            }
            world.identities.push_back(std::move(spec));
        }
        return world;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("world file is missing fields: ") + e.what());
    }
}

void save_world(const IdentityWorld& world, const std::filesystem::path& path) {
    atomic_write_file(path, world_to_json(world));
}

IdentityWorld load_world(const std::filesystem::path& path) {
    return world_from_json(read_text_file(path));
}

} // namespace idforge
