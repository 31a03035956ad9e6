#include "idforge/config.hpp"

#include "idforge/errors.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace idforge {

namespace {

struct Binding {
    std::string key;
    std::function<nlohmann::json()> get;
    std::function<void(const nlohmann::json&)> set;
    std::function<void(const std::string&)> set_str;
};

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        if (!text.empty() && text.front() == '-') throw std::invalid_argument("negative");
        const unsigned long long v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw UsageError("config: '" + key + "' expects a non-negative integer, got '" + text +
                         "'");
    }
}

double parse_f64(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw UsageError("config: '" + key + "' expects a number, got '" + text + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw UsageError("config: '" + key + "' expects a boolean, got '" + text + "'");
}

template <typename T> Binding bind_u64(const std::string& key, T* p) {
    static_assert(sizeof(T) == 8 && std::is_unsigned_v<T>);
    return {key, [p] { return nlohmann::json(*p); },
            [p, key](const nlohmann::json& j) {
                if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
                    throw UsageError("config: '" + key + "' expects a non-negative integer");
                *p = static_cast<T>(j.get<std::uint64_t>());
            },
            [p, key](const std::string& s) { *p = static_cast<T>(parse_u64(key, s)); }};
}

Binding bind_f64(const std::string& key, double* p) {
    return {key, [p] { return nlohmann::json(*p); },
            [p, key](const nlohmann::json& j) {
                if (!j.is_number()) throw UsageError("config: '" + key + "' expects a number");
                *p = j.get<double>();
            },
            [p, key](const std::string& s) { *p = parse_f64(key, s); }};
}

Binding bind_bool(const std::string& key, bool* p) {
    return {key, [p] { return nlohmann::json(*p); },
            [p, key](const nlohmann::json& j) {
                if (!j.is_boolean()) throw UsageError("config: '" + key + "' expects a boolean");
                *p = j.get<bool>();
            },
            [p, key](const std::string& s) { *p = parse_bool(key, s); }};
}

Binding bind_str(const std::string& key, std::string* p) {
    return {key, [p] { return nlohmann::json(*p); },
            [p, key](const nlohmann::json& j) {
                if (!j.is_string()) throw UsageError("config: '" + key + "' expects a string");
                *p = j.get<std::string>();
            },
            [p](const std::string& s) { *p = s; }};
}

Binding bind_u64_list(const std::string& key, std::vector<std::size_t>* p) {
    return {key,
            [p] { return nlohmann::json(*p); },
            [p, key](const nlohmann::json& j) {
                if (!j.is_array())
                    throw UsageError("config: '" + key + "' expects an array of integers");
                std::vector<std::size_t> out;
                for (const auto& e : j) {
                    if (!e.is_number_unsigned() &&
                        !(e.is_number_integer() && e.get<long long>() >= 0))
                        throw UsageError("config: '" + key + "' expects non-negative integers");
                    out.push_back(e.get<std::size_t>());
                }
                *p = std::move(out);
            },
            [p, key](const std::string& s) {
                std::vector<std::size_t> out;
                std::stringstream ss(s);
                std::string item;
                while (std::getline(ss, item, ','))
                    if (!item.empty()) out.push_back(parse_u64(key, item));
                *p = std::move(out);
            }};
}

void bind_world(std::vector<Binding>& b, const std::string& prefix, WorldConfig* w) {
    b.push_back(bind_u64(prefix + ".num_identities", &w->num_identities));
    b.push_back(bind_u64(prefix + ".obs_dim", &w->obs_dim));
    b.push_back(bind_f64(prefix + ".min_separation", &w->min_separation));
    b.push_back(bind_f64(prefix + ".center_box", &w->center_box));
    b.push_back(bind_f64(prefix + ".spread_min", &w->spread_min));
    b.push_back(bind_f64(prefix + ".spread_max", &w->spread_max));
    b.push_back(bind_u64(prefix + ".nuisance_count", &w->nuisance_count));
    b.push_back(bind_f64(prefix + ".nuisance_magnitude_factor", &w->nuisance_magnitude_factor));
}

std::vector<Binding> make_bindings(PipelineConfig& c) {
    std::vector<Binding> b;
    b.push_back(bind_u64("seed", &c.seed));
    b.push_back(bind_str("run_id", &c.run_id));
    bind_world(b, "world", &c.world);
    b.push_back(bind_u64("data.holdout_ids", &c.data.holdout_ids));
    b.push_back(bind_u64("data.real_per_identity", &c.data.real_per_identity));
    b.push_back(bind_u64("data.heldout_per_identity", &c.data.heldout_per_identity));
    b.push_back(bind_u64("data.novel_exemplars", &c.data.novel_exemplars));
    b.push_back(bind_u64("data.novel_queries", &c.data.novel_queries));
    b.push_back(bind_u64("extractor.feat_dim", &c.extractor.feat_dim));
    b.push_back(bind_u64_list("extractor.hidden_dims", &c.extractor.hidden_dims));
    b.push_back(bind_u64("diffusion.timesteps", &c.diffusion.timesteps));
    b.push_back(bind_f64("diffusion.beta_min", &c.diffusion.beta_min));
    b.push_back(bind_f64("diffusion.beta_max", &c.diffusion.beta_max));
    bind_world(b, "pretrain.world", &c.pretrain.world);
    b.push_back(bind_u64("pretrain.arch.time_feat_dim", &c.pretrain.arch.time_feat_dim));
    b.push_back(bind_u64("pretrain.arch.embed_dim", &c.pretrain.arch.embed_dim));
    b.push_back(bind_u64_list("pretrain.arch.hidden_dims", &c.pretrain.arch.hidden_dims));
    b.push_back(bind_u64("pretrain.samples_per_identity", &c.pretrain.samples_per_identity));
    b.push_back(bind_u64("pretrain.steps", &c.pretrain.steps));
    b.push_back(bind_u64("pretrain.batch_size", &c.pretrain.batch_size));
    b.push_back(bind_f64("pretrain.lr", &c.pretrain.lr));
    b.push_back(bind_f64("pretrain.momentum", &c.pretrain.momentum));
    b.push_back(bind_u64("pretrain.log_every", &c.pretrain.log_every));
    b.push_back(bind_u64("coldstart.steps", &c.coldstart.steps));
    b.push_back(bind_u64("coldstart.batch_size", &c.coldstart.batch_size));
    b.push_back(bind_f64("coldstart.lr", &c.coldstart.lr));
    b.push_back(bind_f64("coldstart.momentum", &c.coldstart.momentum));
    b.push_back(bind_bool("coldstart.freeze_trunk", &c.coldstart.freeze_trunk));
    b.push_back(bind_u64("coldstart.log_every", &c.coldstart.log_every));
    b.push_back(bind_bool("rl.enabled", &c.rl_enabled));
    b.push_back(bind_f64("rl.learning_rate", &c.rl.learning_rate));
    b.push_back(bind_u64("rl.batch_size", &c.rl.batch_size));
    b.push_back(bind_u64("rl.identities_per_step", &c.rl.identities_per_step));
    b.push_back(bind_f64("rl.kl_weight", &c.rl.kl_weight));
    b.push_back(bind_u64("rl.timestep_subsample", &c.rl.timestep_subsample));
    b.push_back(bind_u64("rl.steps", &c.rl.steps));
    b.push_back(bind_f64("rl.momentum", &c.rl.momentum));
    b.push_back(bind_f64("rewards.lambda_sem", &c.rewards.lambda_sem));
    b.push_back(bind_f64("rewards.lambda_cov", &c.rewards.lambda_cov));
    b.push_back(bind_f64("rewards.lambda_exp", &c.rewards.lambda_exp));
    b.push_back(bind_f64("rewards.sigma", &c.rewards.sigma));
    b.push_back(bind_f64("rewards.alpha", &c.rewards.alpha));
    b.push_back(bind_f64("rewards.epsilon_expand", &c.rewards.epsilon_expand));
    b.push_back(bind_f64("rewards.tau", &c.rewards.tau));
    b.push_back(bind_f64("rewards.eps_std", &c.rewards.eps_std));
    b.push_back(bind_bool("rewards.cov_include_self_pairs", &c.rewards.cov_include_self_pairs));
    b.push_back(bind_bool("rewards.per_identity_standardize", &c.rewards.per_identity_standardize));
    b.push_back(bind_bool("rewards.sem_on", &c.reward_sem_on));
    b.push_back(bind_bool("rewards.cov_on", &c.reward_cov_on));
    b.push_back(bind_bool("rewards.exp_on", &c.reward_exp_on));
    b.push_back(bind_u64("synth.per_identity", &c.synth_per_identity));
    b.push_back(bind_u64("train.epochs", &c.train.epochs));
    b.push_back(bind_u64("train.identities_per_batch", &c.train.identities_per_batch));
    b.push_back(bind_u64("train.samples_per_identity", &c.train.samples_per_identity));
    b.push_back(bind_f64("train.synth_ratio", &c.train.synth_ratio));
    b.push_back(bind_f64("train.learning_rate", &c.train.learning_rate));
    b.push_back(bind_bool("train.use_selector", &c.train.use_selector));
    b.push_back(bind_u64_list("train.hidden_dims", &c.train.hidden_dims));
    b.push_back(bind_u64("train.eval_every", &c.train.eval_every));
    b.push_back(bind_f64("select.keep_fraction", &c.train.selection.keep_fraction));
    b.push_back(bind_f64("select.virtual_lr", &c.train.selection.virtual_lr));
    b.push_back(bind_bool("select.include_candidates", &c.train.selection.include_candidates));
    return b;
}

const Binding* find_binding(const std::vector<Binding>& b, const std::string& key) {
    for (const Binding& x : b)
        if (x.key == key) return &x;
    return nullptr;
}

void collect_keys(const nlohmann::json& node, const std::string& prefix,
                  std::vector<std::pair<std::string, const nlohmann::json*>>& out) {
    if (node.is_object()) {
        for (auto it = node.begin(); it != node.end(); ++it) {
            const std::string next = prefix.empty() ? it.key() : prefix + "." + it.key();
            collect_keys(it.value(), next, out);
        }
    } else {
        out.emplace_back(prefix, &node);
    }
}

} // namespace

PipelineConfig default_config() {
    PipelineConfig c;
    // Target world tuned so eight real samples per identity genuinely
    // underdetermine the class boundaries: a tight center box keeps
    // neighbouring identities within a couple of cluster widths of each
    // other, and the nuisance directions are stronger than the spread.
    // Near-unit coordinate scale also keeps the denoiser well conditioned.
    c.world.center_box = 1.5;
    c.world.min_separation = 1.6;
    c.world.spread_min = 0.55;
    c.world.spread_max = 0.85;
    c.world.nuisance_count = 3;
    c.world.nuisance_magnitude_factor = 1.25;
    // The generic pretraining world is broader and looser than the target
    // but drawn from the same family and at the same coordinate scale. A
    // dense identity grid matters here: the frozen trunk can only map new
    // class embeddings onto distributions it interpolates between anchors,
    // so anchor coverage bounds cold-start quality.
    c.pretrain.world.num_identities = 96;
    c.pretrain.world.center_box = 2.2;
    c.pretrain.world.min_separation = 1.2;
    c.pretrain.world.spread_min = 0.5;
    c.pretrain.world.spread_max = 1.0;
    c.pretrain.world.nuisance_count = 3;
    c.pretrain.world.nuisance_magnitude_factor = 1.25;
    c.pretrain.samples_per_identity = 32;
    c.pretrain.steps = 12000;
    c.pretrain.arch.hidden_dims = {96, 96};
    c.pretrain.arch.embed_dim = 16;
    // Cold-start only moves the class embeddings, so it tolerates a much
    // larger learning rate than full fine-tuning would.
    c.coldstart.lr = 1e-3;
    c.coldstart.steps = 2500;
    c.coldstart.batch_size = 64;
    // Reward features: wide enough that identity structure survives the
    // random projection onto the unit sphere.
    c.extractor.feat_dim = 48;
    c.extractor.hidden_dims = {128};
    // Policy-gradient stage: large step batches tame REINFORCE variance and
    // a strong divergence anchor keeps the sampler from wandering along
    // directions the reward features cannot see.
    c.rl.steps = 400;
    c.rl.learning_rate = 1e-4;
    c.rl.batch_size = 8;
    c.rl.identities_per_step = 7;
    c.rl.kl_weight = 3.0;
    c.synth_per_identity = 128;
    // Downstream budget: long enough for the scarce real pool to be fit to
    // convergence, so augmentation value shows up as an overfitting gap.
    c.train.epochs = 450;
    c.train.hidden_dims = {128};
    c.train.samples_per_identity = 8;
    c.train.synth_ratio = 0.75;
    // Candidate utilities are judged on the real half of the batch alone.
    c.train.selection.virtual_lr = 0.05;
    c.train.selection.include_candidates = false;
    // Finer evaluation grid: 32 held-out queries per identity.
    c.data.heldout_per_identity = 32;
    return c;
}

std::vector<std::string> config_keys() {
    PipelineConfig c;
    std::vector<std::string> keys;
    for (const Binding& b : make_bindings(c)) keys.push_back(b.key);
    return keys;
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
    PipelineConfig copy = cfg; // bindings hold pointers, so bind a local
    nlohmann::json doc = nlohmann::json::object();
    for (const Binding& b : make_bindings(copy)) {
        nlohmann::json* slot = &doc;
        std::string rest = b.key;
        for (std::size_t dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
            slot = &(*slot)[rest.substr(0, dot)];
            rest = rest.substr(dot + 1);
        }
        (*slot)[rest] = b.get();
    }
    return doc;
}

PipelineConfig config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw UsageError("config: document root must be an object");
    PipelineConfig cfg = default_config();
    const auto bindings = make_bindings(cfg);
    std::vector<std::pair<std::string, const nlohmann::json*>> leaves;
    collect_keys(doc, "", leaves);
    for (const auto& [key, value] : leaves) {
        const Binding* b = find_binding(bindings, key);
        if (!b) throw UsageError("config: unknown key '" + key + "'");
        b->set(*value);
    }
    return cfg;
}

void apply_override(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const auto bindings = make_bindings(cfg);
    const Binding* b = find_binding(bindings, key);
    if (!b) throw UsageError("config: unknown key '" + key + "'");
    b->set_str(value);
}

std::string env_name_for_key(const std::string& key) {
    std::string out = "IDFORGE_";
    for (char ch : key)
        out.push_back(ch == '.' ? '_'
                                : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    return out;
}

void apply_env_overrides(PipelineConfig& cfg,
                         const std::function<const char*(const std::string&)>& getenv_fn) {
    const auto bindings = make_bindings(cfg);
    for (const Binding& b : bindings) {
        const char* v = getenv_fn(env_name_for_key(b.key));
        if (v) b.set_str(v);
    }
}

PipelineConfig resolve_config(const std::string& file_text_or_empty,
                              const std::function<const char*(const std::string&)>& getenv_fn,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    PipelineConfig cfg;
    if (file_text_or_empty.empty()) {
        cfg = default_config();
    } else {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(file_text_or_empty);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("config: file is not valid JSON: ") + e.what());
        }
        cfg = config_from_json(doc);
    }
    if (getenv_fn) apply_env_overrides(cfg, getenv_fn);
    for (const auto& [key, value] : overrides) apply_override(cfg, key, value);
    return cfg;
}

} // namespace idforge
