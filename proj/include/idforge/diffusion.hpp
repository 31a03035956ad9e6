#pragma once

#include "idforge/condnet.hpp"
#include "idforge/world.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace idforge {

// Linear-beta DDPM schedule. Timesteps are 1-based: beta_at(1) is the first
// noising step, alpha_bar_at(0) is defined as 1.
struct NoiseSchedule {
    std::size_t T = 0;
    Vec beta;
    Vec alpha;
    Vec alpha_bar;

    double beta_at(std::size_t t) const;
    double alpha_at(std::size_t t) const;
    double alpha_bar_at(std::size_t t) const; // t may be 0 (returns 1)

    // Reverse-step ("small" posterior) standard deviation; 0 at t = 1, which
    // makes the final step deterministic.
    double sigma(std::size_t t) const;

    std::uint64_t fingerprint() const;
};

NoiseSchedule build_schedule(std::size_t T, double beta_min = 0.02, double beta_max = 0.25);

// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Vec q_sample(const Vec& x0, std::size_t t, const Vec& eps, const NoiseSchedule& s);

Vec predict_eps(const CondNet& net, const Vec& x_t, std::size_t t, std::size_t y,
                CondTape* tape = nullptr);

struct DenoiseLossResult {
    double loss = 0.0;
    CondGrads grads;
};

// ||eps_hat - eps||^2 at a fixed (t, eps): deterministic, so finite
// differences can probe the gradients directly.
DenoiseLossResult denoise_loss_at(const CondNet& net, const Vec& x0, std::size_t y, std::size_t t,
                                  const Vec& eps, const NoiseSchedule& s);

// Batch objective: t uniform on [1, T] and eps fresh per sample; loss and
// grads averaged over the batch.
DenoiseLossResult denoise_loss(const CondNet& net, const std::vector<LabeledSample>& batch,
                               const NoiseSchedule& s, Rng& rng);

struct DenoiserArch {
    std::size_t time_feat_dim = 8;
    std::size_t embed_dim = 8;
    std::vector<std::size_t> hidden_dims = {64, 64};
};

struct PretrainConfig {
    WorldConfig world;  // broad generic world (the "large-scale" stand-in)
    DenoiserArch arch;
    std::size_t samples_per_identity = 64;
    std::size_t steps = 3000;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double momentum = 0.9;
    std::size_t log_every = 100;
};

struct TrainLog {
    std::vector<double> losses; // sampled every log_every steps
    double final_loss = 0.0;
};

struct PretrainResult {
    CondNet net;
    TrainLog log;
};

// Trains a fresh denoiser on a wide generic world; the returned parameters
// play the role of the broadly pretrained model.
PretrainResult pretrain_generic(const PretrainConfig& config, const NoiseSchedule& s,
                                std::uint64_t seed);

struct ColdStartConfig {
    std::size_t num_classes = 0; // target label space
    std::size_t steps = 4000;
    std::size_t batch_size = 16;
    double lr = 1e-5;
    double momentum = 0.9;
    bool freeze_trunk = true;
    std::size_t log_every = 100;
};

struct ColdStartResult {
    CondNet net;
    TrainLog log;
};

// Swaps in a zero-initialized class-embedding table sized for the target
// label space, then fine-tunes on the scarce target data.
ColdStartResult coldstart_init(const CondNet& theta_pre,
                               const std::vector<LabeledSample>& dataset,
                               const ColdStartConfig& config, const NoiseSchedule& s,
                               std::uint64_t seed);

// DDPM posterior mean (x_t - beta_t/sqrt(1-alpha_bar_t) * eps_hat)/sqrt(alpha_t).
Vec posterior_mean(const CondNet& net, const Vec& x_t, std::size_t t, std::size_t y,
                   const NoiseSchedule& s, CondTape* tape = nullptr);

// d mean_i / d eps_hat_i — the (diagonal) Jacobian factor of the mean w.r.t.
// the network output, used to backpropagate through posterior_mean.
double posterior_mean_eps_coef(const NoiseSchedule& s, std::size_t t);

struct ReverseStepResult {
    Vec x_prev;
    Vec mean;
    double std = 0.0;
};

ReverseStepResult reverse_step(const CondNet& net, const Vec& x_t, std::size_t t, std::size_t y,
                               const NoiseSchedule& s, Rng& rng);

// One recorded reverse transition x_t -> x_{t-1}.
struct TrajStep {
    std::size_t t = 0;
    Vec mean;
    double std = 0.0;
    std::uint64_t noise_seed = 0; // child stream that produced the transition noise
};

struct Trajectory {
    std::size_t class_id = 0;
    std::vector<Vec> states; // x_T .. x_0, T+1 entries
    std::vector<TrajStep> steps;
    std::uint64_t schedule_fingerprint = 0;

    const Vec& x0() const { return states.back(); }
};

Trajectory sample_trajectory(const CondNet& net, std::size_t y, const NoiseSchedule& s, Rng& rng);

// Exact isotropic Gaussian log density; std must be positive.
double log_prob_step(const Vec& mean, double std_dev, const Vec& x_prev);

// Versioned JSON checkpoint carrying the parameters plus the schedule they
// were trained against.
struct Denoiser {
    CondNet net;
    NoiseSchedule schedule;
};

std::string denoiser_to_json(const Denoiser& d);
Denoiser denoiser_from_json(const std::string& text);
void save_denoiser(const Denoiser& d, const std::filesystem::path& path);
Denoiser load_denoiser(const std::filesystem::path& path);

} // namespace idforge
