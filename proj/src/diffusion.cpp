#include "idforge/diffusion.hpp"

#include "idforge/io.hpp"

#include "idforge/serialize.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>

namespace idforge {

namespace {
constexpr int kCheckpointVersion = 1;

void check_t(std::size_t t, std::size_t T, const char* where) {
    if (t < 1 || t > T) throw ArgumentError(std::string(where) + ": t outside [1, T]");
}
} // namespace

double NoiseSchedule::beta_at(std::size_t t) const {
    check_t(t, T, "beta_at");
    return beta[t - 1];
}

double NoiseSchedule::alpha_at(std::size_t t) const {
    check_t(t, T, "alpha_at");
    return alpha[t - 1];
}

double NoiseSchedule::alpha_bar_at(std::size_t t) const {
    if (t == 0) return 1.0;
    check_t(t, T, "alpha_bar_at");
    return alpha_bar[t - 1];
}

double NoiseSchedule::sigma(std::size_t t) const {
    check_t(t, T, "sigma");
    const double var =
        (1.0 - alpha_bar_at(t - 1)) / (1.0 - alpha_bar_at(t)) * beta_at(t);
    return std::sqrt(var);
}

std::uint64_t NoiseSchedule::fingerprint() const {
    std::string repr = "T=" + std::to_string(T);
    for (double b : beta) repr += ";" + format_double(b);
    return fnv1a(repr);
}

NoiseSchedule build_schedule(std::size_t T, double beta_min, double beta_max) {
    if (T < 1) throw ArgumentError("build_schedule: T must be >= 1");
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
        throw ArgumentError("build_schedule: need 0 < beta_min <= beta_max < 1");
    }
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        const double frac = T > 1 ? static_cast<double>(i) / static_cast<double>(T - 1) : 0.0;
        s.beta[i] = beta_min + (beta_max - beta_min) * frac;
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

Vec q_sample(const Vec& x0, std::size_t t, const Vec& eps, const NoiseSchedule& s) {
    check_t(t, s.T, "q_sample");
    check_dim(eps.size(), x0.size(), "q_sample eps");
    const double ab = s.alpha_bar_at(t);
    Vec out = scaled(x0, std::sqrt(ab));
    axpy_into(out, std::sqrt(1.0 - ab), eps);
    return out;
}

Vec predict_eps(const CondNet& net, const Vec& x_t, std::size_t t, std::size_t y,
                CondTape* tape) {
    return cond_forward(net, x_t, t, y, tape);
}

DenoiseLossResult denoise_loss_at(const CondNet& net, const Vec& x0, std::size_t y, std::size_t t,
                                  const Vec& eps, const NoiseSchedule& s) {
    const Vec x_t = q_sample(x0, t, eps, s);
    CondTape tape;
    const Vec eps_hat = predict_eps(net, x_t, t, y, &tape);

    DenoiseLossResult res;
    Vec grad_out(eps_hat.size());
    for (std::size_t i = 0; i < eps_hat.size(); ++i) {
        const double d = eps_hat[i] - eps[i];
        res.loss += d * d;
        grad_out[i] = 2.0 * d;
    }
    res.grads = cond_backward(net, tape, grad_out);
    return res;
}

DenoiseLossResult denoise_loss(const CondNet& net, const std::vector<LabeledSample>& batch,
                               const NoiseSchedule& s, Rng& rng) {
    if (batch.empty()) throw ArgumentError("denoise_loss: empty batch");
    DenoiseLossResult acc;
    acc.grads = zero_grads(net);
    for (const auto& sample : batch) {
        const std::size_t t = 1 + rng.uniform_index(s.T);
        const Vec eps = rng.normal_vec(sample.x.size());
        DenoiseLossResult one = denoise_loss_at(net, sample.x, sample.y, t, eps, s);
        acc.loss += one.loss;
        accumulate(acc.grads, one.grads);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    acc.loss *= inv;
    for (auto& m : acc.grads.trunk.w) kern::scal(inv, m.data.data(), m.data.size());
    for (auto& b : acc.grads.trunk.b) kern::scal(inv, b.data(), b.size());
    kern::scal(inv, acc.grads.class_embed.data.data(), acc.grads.class_embed.data.size());
    return acc;
}

PretrainResult pretrain_generic(const PretrainConfig& config, const NoiseSchedule& s,
                                std::uint64_t seed) {
    Rng root(seed);
    const IdentityWorld world = generate_world(config.world, root.child("world").seed());

    Rng data_rng = root.child("data");
    std::vector<LabeledSample> pool;
    pool.reserve(world.num_identities() * config.samples_per_identity);
    for (std::size_t y = 0; y < world.num_identities(); ++y) {
        auto xs = sample_real(world, y, config.samples_per_identity, data_rng);
        pool.insert(pool.end(), xs.begin(), xs.end());
    }

    Rng init_rng = root.child("init");
    PretrainResult res;
    res.net = make_cond_net(config.world.obs_dim, config.arch.time_feat_dim,
                            config.arch.embed_dim, world.num_identities(),
                            config.arch.hidden_dims, s.T, init_rng);

    Rng train_rng = root.child("train");
    CondSgdMomentum opt(config.lr, config.momentum, false);
    Rng batch_rng = train_rng.child("batches");
    Rng loss_rng = train_rng.child("loss");
    double last = 0.0;
    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<LabeledSample> batch;
        batch.reserve(config.batch_size);
        for (std::size_t i = 0; i < config.batch_size; ++i) {
            batch.push_back(pool[batch_rng.uniform_index(pool.size())]);
        }
        DenoiseLossResult r = denoise_loss(res.net, batch, s, loss_rng);
        if (!std::isfinite(r.loss)) throw TrainingError("pretrain_generic: loss diverged");
        res.net = opt.step(res.net, r.grads);
        last = r.loss;
        if (config.log_every > 0 && step % config.log_every == 0) {
            res.log.losses.push_back(r.loss);
        }
    }
    res.log.final_loss = last;
    return res;
}

ColdStartResult coldstart_init(const CondNet& theta_pre,
                               const std::vector<LabeledSample>& dataset,
                               const ColdStartConfig& config, const NoiseSchedule& s,
                               std::uint64_t seed) {
    if (config.num_classes == 0) throw ArgumentError("coldstart_init: num_classes must be > 0");
    for (const auto& sample : dataset) {
        if (sample.y >= config.num_classes) {
            throw LabelError("coldstart_init: dataset label outside target space");
        }
    }

    ColdStartResult res;
    res.net = reset_class_embedding(theta_pre, config.num_classes);

    Rng root(seed);
    CondSgdMomentum opt(config.lr, config.momentum, config.freeze_trunk);
    Rng batch_rng = root.child("batches");
    Rng loss_rng = root.child("loss");
    double last = 0.0;
    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<LabeledSample> batch;
        batch.reserve(config.batch_size);
        for (std::size_t i = 0; i < config.batch_size; ++i) {
            batch.push_back(dataset[batch_rng.uniform_index(dataset.size())]);
        }
        DenoiseLossResult r = denoise_loss(res.net, batch, s, loss_rng);
        if (!std::isfinite(r.loss)) throw TrainingError("coldstart_init: loss diverged");
        res.net = opt.step(res.net, r.grads);
        last = r.loss;
        if (config.log_every > 0 && step % config.log_every == 0) {
            res.log.losses.push_back(r.loss);
        }
    }
    res.log.final_loss = last;
    return res;
}

Vec posterior_mean(const CondNet& net, const Vec& x_t, std::size_t t, std::size_t y,
                   const NoiseSchedule& s, CondTape* tape) {
    check_t(t, s.T, "posterior_mean");
    const Vec eps_hat = predict_eps(net, x_t, t, y, tape);
    const double coef = s.beta_at(t) / std::sqrt(1.0 - s.alpha_bar_at(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(t));
    Vec mean = x_t;
    axpy_into(mean, -coef, eps_hat);
    for (auto& v : mean) v *= inv_sqrt_alpha;
    return mean;
}

double posterior_mean_eps_coef(const NoiseSchedule& s, std::size_t t) {
    return -s.beta_at(t) / (std::sqrt(1.0 - s.alpha_bar_at(t)) * std::sqrt(s.alpha_at(t)));
}

ReverseStepResult reverse_step(const CondNet& net, const Vec& x_t, std::size_t t, std::size_t y,
                               const NoiseSchedule& s, Rng& rng) {
    ReverseStepResult res;
    res.mean = posterior_mean(net, x_t, t, y, s);
    res.std = s.sigma(t);
    res.x_prev = gaussian_sample(rng, res.mean, res.std);
    return res;
}

Trajectory sample_trajectory(const CondNet& net, std::size_t y, const NoiseSchedule& s,
                             Rng& rng) {
    Trajectory traj;
    traj.class_id = y;
    traj.schedule_fingerprint = s.fingerprint();
    traj.states.reserve(s.T + 1);
    traj.steps.reserve(s.T);

    Rng init_rng = rng.child("x_T");
    traj.states.push_back(init_rng.normal_vec(net.state_dim));

    for (std::size_t t = s.T; t >= 1; --t) {
        Rng noise = rng.child("noise", t);
        ReverseStepResult step = reverse_step(net, traj.states.back(), t, y, s, noise);
        traj.steps.push_back({t, std::move(step.mean), step.std, noise.seed()});
        traj.states.push_back(std::move(step.x_prev));
    }
    return traj;
}

double log_prob_step(const Vec& mean, double std_dev, const Vec& x_prev) {
    if (!(std_dev > 0.0)) throw ArgumentError("log_prob_step: std must be > 0");
    check_dim(x_prev.size(), mean.size(), "log_prob_step");
    const double d = static_cast<double>(mean.size());
    const double dist2 = sq_dist(x_prev, mean);
    return -0.5 * d * std::log(2.0 * std::numbers::pi) - d * std::log(std_dev) -
           dist2 / (2.0 * std_dev * std_dev);
}

// --- checkpointing -----------------------------------------------------

std::string denoiser_to_json(const Denoiser& d) {
    nlohmann::json j;
    j["version"] = kCheckpointVersion;
    j["state_dim"] = d.net.state_dim;
    j["time_feat_dim"] = d.net.time_feat_dim;
    j["t_max"] = d.net.t_max;
    j["trunk"] = mlp_to_json_obj(d.net.trunk);
    j["class_embed"] = {{"rows", d.net.class_embed.rows},
                        {"cols", d.net.class_embed.cols},
                        {"data", d.net.class_embed.data}};
    j["schedule"] = {{"T", d.schedule.T}, {"beta", d.schedule.beta}};
    return j.dump(2) + "\n";
}

Denoiser denoiser_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (!j.contains("version") || j["version"].get<int>() != kCheckpointVersion) {
        throw ProtocolError("checkpoint version is not supported");
    }
    try {
        Denoiser d;
        Rng uid_source(j.at("state_dim").get<std::uint64_t>());
        d.net.trunk = mlp_from_json_obj(j.at("trunk"), uid_source);
        d.net.state_dim = j.at("state_dim").get<std::size_t>();
        d.net.time_feat_dim = j.at("time_feat_dim").get<std::size_t>();
        d.net.t_max = j.at("t_max").get<std::size_t>();
        const auto& ce = j.at("class_embed");
        d.net.class_embed = Mat(ce.at("rows").get<std::size_t>(), ce.at("cols").get<std::size_t>());
        d.net.class_embed.data = ce.at("data").get<Vec>();
        if (d.net.class_embed.data.size() != d.net.class_embed.rows * d.net.class_embed.cols) {
            throw ProtocolError("checkpoint class_embed shape mismatch");
        }

        const auto& sch = j.at("schedule");
        d.schedule.T = sch.at("T").get<std::size_t>();
        d.schedule.beta = sch.at("beta").get<Vec>();
        if (d.schedule.beta.size() != d.schedule.T) {
            throw ProtocolError("checkpoint schedule shape mismatch");
        }
        d.schedule.alpha.resize(d.schedule.T);
        d.schedule.alpha_bar.resize(d.schedule.T);
        double prod = 1.0;
        for (std::size_t i = 0; i < d.schedule.T; ++i) {
            d.schedule.alpha[i] = 1.0 - d.schedule.beta[i];
            prod *= d.schedule.alpha[i];
            d.schedule.alpha_bar[i] = prod;
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("checkpoint is missing fields: ") + e.what());
    }
}

void save_denoiser(const Denoiser& d, const std::filesystem::path& path) {
    atomic_write_file(path, denoiser_to_json(d));
}

Denoiser load_denoiser(const std::filesystem::path& path) {
    return denoiser_from_json(read_text_file(path));
}

} // namespace idforge
