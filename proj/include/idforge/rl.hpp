#pragma once

#include "idforge/diffusion.hpp"
#include "idforge/rewards.hpp"

#include <string>
#include <utility>
#include <vector>

namespace idforge {

struct RlConfig {
    double learning_rate = 1e-5;
    std::size_t batch_size = 4;          // trajectories per identity
    std::size_t identities_per_step = 4;
    double kl_weight = 0.01;             // pull toward the cold-start policy
    std::size_t timestep_subsample = 0;  // 0 = every eligible timestep
    std::size_t steps = 300;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

struct PolicyGradientReport {
    std::size_t step = 0;
    double mean_reward = 0.0;
    double mean_r_sem = 0.0;
    double mean_r_cov = 0.0;
    double mean_r_exp = 0.0;
    double grad_norm = 0.0;
    double kl_estimate = 0.0;
};

// Timesteps the policy gradient runs over. Only t >= 2 is eligible (the
// final step is deterministic); uniform subsampling keeps the estimator
// unbiased via the (T-1)/k rescale.
struct TimestepSelection {
    std::vector<std::size_t> ts;
    double rescale = 1.0;
};

TimestepSelection select_timesteps(const NoiseSchedule& s, std::size_t subsample, Rng& rng);

// Sum over the selected transitions of log p(x_{t-1} | x_t) under the
// current parameters, states held fixed at their recorded values.
double trajectory_logprob(const CondNet& net, const Trajectory& traj, const NoiseSchedule& s,
                          const std::vector<std::size_t>& timesteps);

// Gradient of trajectory_logprob w.r.t. the parameters (score-function
// estimator: differentiates the density, not the sampling path).
CondGrads trajectory_logprob_grads(const CondNet& net, const Trajectory& traj,
                                   const NoiseSchedule& s,
                                   const std::vector<std::size_t>& timesteps);

// One ascent step on the reward-weighted log probabilities minus the
// KL penalty toward theta_ref, evaluated on the recorded trajectories.
// Passing an optimizer keeps momentum across calls; without one the update
// is a plain SGD step. Throws NumericError (no step applied) when the
// gradient is non-finite.
std::pair<CondNet, PolicyGradientReport> policy_update(
    const CondNet& params, const std::vector<Trajectory>& trajs,
    const std::vector<double>& rewards, const CondNet& theta_ref, const NoiseSchedule& s,
    const RlConfig& cfg, const TimestepSelection& sel, CondSgdMomentum* opt = nullptr);

struct RlResult {
    CondNet net;
    std::vector<PolicyGradientReport> history;
    bool aborted = false;
    std::string abort_reason;
};

// The outer loop: per step, pick identities, roll out trajectory batches,
// reward the terminal samples, standardize across the step, and apply one
// policy update. Deterministic in cfg.seed. On divergence the partial
// history is returned with aborted set.
RlResult rl_finetune(const CondNet& theta0, const MemoryBank& bank,
                     const FeatureExtractor& extractor, const RewardWeights& weights,
                     const RlConfig& cfg, const NoiseSchedule& s);

std::vector<std::string> rl_history_csv_header();
std::vector<std::string> rl_history_csv_row(const PolicyGradientReport& r);

} // namespace idforge
