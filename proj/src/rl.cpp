#include "idforge/rl.hpp"

#include "idforge/io.hpp"

#include <algorithm>
#include <cmath>

namespace idforge {

TimestepSelection select_timesteps(const NoiseSchedule& s, std::size_t subsample, Rng& rng) {
    if (s.T < 2) return {{}, 1.0}; // no stochastic transitions to differentiate
    std::vector<std::size_t> eligible;
    eligible.reserve(s.T - 1);
    for (std::size_t t = 2; t <= s.T; ++t) eligible.push_back(t);

    TimestepSelection sel;
    if (subsample == 0 || subsample >= eligible.size()) {
        sel.ts = std::move(eligible);
        sel.rescale = 1.0;
        return sel;
    }
    // Partial Fisher-Yates, then sort for a fixed accumulation order.
    for (std::size_t i = 0; i < subsample; ++i) {
        const std::size_t j = i + rng.uniform_index(eligible.size() - i);
        std::swap(eligible[i], eligible[j]);
    }
    sel.ts.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(subsample));
    std::sort(sel.ts.begin(), sel.ts.end());
    sel.rescale = static_cast<double>(eligible.size()) / static_cast<double>(subsample);
    return sel;
}

namespace {

// states[T - t] is x_t; the transition at t moves it to states[T - t + 1].
const Vec& state_at(const Trajectory& traj, const NoiseSchedule& s, std::size_t t) {
    return traj.states[s.T - t];
}
const Vec& state_after(const Trajectory& traj, const NoiseSchedule& s, std::size_t t) {
    return traj.states[s.T - t + 1];
}

void check_traj(const Trajectory& traj, const NoiseSchedule& s, const char* where) {
    if (traj.schedule_fingerprint != s.fingerprint()) {
        throw StateError(std::string(where) + ": trajectory was sampled under a different schedule");
    }
    if (traj.states.size() != s.T + 1) {
        throw StateError(std::string(where) + ": trajectory length does not match the schedule");
    }
}

} // namespace

double trajectory_logprob(const CondNet& net, const Trajectory& traj, const NoiseSchedule& s,
                          const std::vector<std::size_t>& timesteps) {
    check_traj(traj, s, "trajectory_logprob");
    double acc = 0.0;
    for (std::size_t t : timesteps) {
        const double sd = s.sigma(t);
        if (!(sd > 0.0)) {
            throw ArgumentError("trajectory_logprob: timestep has zero variance");
        }
        const Vec mean = posterior_mean(net, state_at(traj, s, t), t, traj.class_id, s);
        acc += log_prob_step(mean, sd, state_after(traj, s, t));
    }
    return acc;
}

CondGrads trajectory_logprob_grads(const CondNet& net, const Trajectory& traj,
                                   const NoiseSchedule& s,
                                   const std::vector<std::size_t>& timesteps) {
    check_traj(traj, s, "trajectory_logprob_grads");
    CondGrads grads = zero_grads(net);
    for (std::size_t t : timesteps) {
        const double sd = s.sigma(t);
        if (!(sd > 0.0)) {
            throw ArgumentError("trajectory_logprob_grads: timestep has zero variance");
        }
        CondTape tape;
        const Vec mean = posterior_mean(net, state_at(traj, s, t), t, traj.class_id, s, &tape);
        const Vec& x_prev = state_after(traj, s, t);

        // d log p / d mean = (x_prev - mean)/sd^2, then the diagonal
        // mean -> eps_hat factor.
        const double coef = posterior_mean_eps_coef(s, t) / (sd * sd);
        Vec grad_out(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) {
            grad_out[i] = coef * (x_prev[i] - mean[i]);
        }
        accumulate(grads, cond_backward(net, tape, grad_out));
    }
    return grads;
}

std::pair<CondNet, PolicyGradientReport> policy_update(
    const CondNet& params, const std::vector<Trajectory>& trajs,
    const std::vector<double>& rewards, const CondNet& theta_ref, const NoiseSchedule& s,
    const RlConfig& cfg, const TimestepSelection& sel, CondSgdMomentum* opt) {
    if (trajs.size() != rewards.size()) {
        throw ArgumentError("policy_update: one reward per trajectory required");
    }
    if (trajs.empty()) throw ArgumentError("policy_update: no trajectories");
    if (cfg.kl_weight < 0.0) throw ArgumentError("policy_update: kl_weight must be >= 0");

    const double inv_n = 1.0 / static_cast<double>(trajs.size());
    CondGrads ascent = zero_grads(params);
    double kl_acc = 0.0;

    for (std::size_t i = 0; i < trajs.size(); ++i) {
        check_traj(trajs[i], s, "policy_update");
        for (std::size_t t : sel.ts) {
            const double sd = s.sigma(t);
            if (!(sd > 0.0)) throw ArgumentError("policy_update: timestep has zero variance");
            const Vec& x_t = state_at(trajs[i], s, t);
            const Vec& x_prev = state_after(trajs[i], s, t);

            CondTape tape;
            const Vec mean = posterior_mean(params, x_t, t, trajs[i].class_id, s, &tape);
            const Vec mean_ref = posterior_mean(theta_ref, x_t, t, trajs[i].class_id, s);

            const double inv_var = 1.0 / (sd * sd);
            kl_acc += 0.5 * sq_dist(mean, mean_ref) * inv_var;

            // Ascent on R * rescale * log p - kl_weight * KL, both through
            // the mean path, fused into one backward pass per transition.
            const double eps_coef = posterior_mean_eps_coef(s, t);
            const double kl_scale =
                cfg.kl_weight / static_cast<double>(sel.ts.size());
            Vec grad_out(mean.size());
            for (std::size_t d = 0; d < mean.size(); ++d) {
                const double dlogp_dmean = (x_prev[d] - mean[d]) * inv_var;
                const double dkl_dmean = (mean[d] - mean_ref[d]) * inv_var;
                grad_out[d] =
                    eps_coef * (rewards[i] * sel.rescale * dlogp_dmean - kl_scale * dkl_dmean);
            }
            accumulate(ascent, cond_backward(params, tape, grad_out), inv_n);
        }
    }

    PolicyGradientReport report;
    report.mean_reward = 0.0;
    for (double r : rewards) report.mean_reward += r * inv_n;
    report.grad_norm = grad_norm(params, ascent);
    report.kl_estimate =
        sel.ts.empty() ? 0.0 : kl_acc * inv_n / static_cast<double>(sel.ts.size());

    if (!std::isfinite(report.grad_norm)) {
        throw NumericError("policy_update: non-finite policy gradient, step rejected");
    }

    // Optimizers minimize; feed the negated ascent direction.
    CondGrads descent = zero_grads(params);
    accumulate(descent, ascent, -1.0);
    CondNet next = opt ? opt->step(params, descent)
                       : sgd_step(params, descent, cfg.learning_rate);
    return {std::move(next), report};
}

RlResult rl_finetune(const CondNet& theta0, const MemoryBank& bank,
                     const FeatureExtractor& extractor, const RewardWeights& weights,
                     const RlConfig& cfg, const NoiseSchedule& s) {
    if (cfg.batch_size == 0 || cfg.identities_per_step == 0) {
        throw ArgumentError("rl_finetune: counts must be positive");
    }
    if (!extractor.normalize_output) {
        throw ArgumentError("rl_finetune: rewards need normalized features");
    }
    std::vector<std::size_t> ids;
    ids.reserve(bank.entries.size());
    for (const auto& [y, entry] : bank.entries) ids.push_back(y);
    if (ids.empty()) throw ArgumentError("rl_finetune: empty bank");

    RlResult res;
    res.net = theta0;
    const CondNet theta_ref = theta0;
    const RewardWeights rw = resolved_weights(weights, bank);
    CondSgdMomentum opt(cfg.learning_rate, cfg.momentum, false);
    Rng root(cfg.seed);

    const std::size_t ids_per_step = std::min(cfg.identities_per_step, ids.size());

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Rng step_rng = root.child("step", step);

        // Distinct identities for this step (partial shuffle).
        std::vector<std::size_t> pool = ids;
        Rng pick_rng = step_rng.child("ids");
        for (std::size_t i = 0; i < ids_per_step; ++i) {
            const std::size_t j = i + pick_rng.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
        }

        std::vector<Trajectory> trajs;
        std::vector<IdentityBatchScore> scores;
        trajs.reserve(ids_per_step * cfg.batch_size);
        for (std::size_t b = 0; b < ids_per_step; ++b) {
            const std::size_t y = pool[b];
            std::vector<Vec> feats;
            feats.reserve(cfg.batch_size);
            for (std::size_t i = 0; i < cfg.batch_size; ++i) {
                Rng traj_rng = step_rng.child("traj", b * cfg.batch_size + i);
                Trajectory traj = sample_trajectory(res.net, y, s, traj_rng);
                feats.push_back(extract_features(extractor, traj.x0()));
                trajs.push_back(std::move(traj));
            }
            scores.push_back(score_identity_batch(feats, y, bank, rw));
        }

        const auto breakdowns = finalize_step(scores, rw);
        std::vector<double> rewards;
        rewards.reserve(trajs.size());
        double sem_mean = 0.0, cov_mean = 0.0, exp_mean = 0.0;
        for (const auto& batch : breakdowns) {
            for (const auto& bd : batch) {
                rewards.push_back(bd.r_norm);
                sem_mean += bd.r_sem;
                cov_mean += bd.r_cov;
                exp_mean += bd.r_exp;
            }
        }
        const double inv = 1.0 / static_cast<double>(rewards.size());

        Rng tsel_rng = step_rng.child("tsel");
        const TimestepSelection sel = select_timesteps(s, cfg.timestep_subsample, tsel_rng);

        try {
            auto [next, report] = policy_update(res.net, trajs, rewards, theta_ref, s, cfg,
                                                sel, &opt);
            res.net = std::move(next);
            report.step = step;
            report.mean_r_sem = sem_mean * inv;
            report.mean_r_cov = cov_mean * inv;
            report.mean_r_exp = exp_mean * inv;
            res.history.push_back(report);
        } catch (const NumericError& e) {
            res.aborted = true;
            res.abort_reason = e.what();
            return res;
        }
    }
    return res;
}

std::vector<std::string> rl_history_csv_header() {
    return {"step", "mean_r_norm", "mean_r_sem", "mean_r_cov", "mean_r_exp",
            "grad_norm", "kl_estimate"};
}

std::vector<std::string> rl_history_csv_row(const PolicyGradientReport& r) {
    return {std::to_string(r.step),        format_double(r.mean_reward),
            format_double(r.mean_r_sem),   format_double(r.mean_r_cov),
            format_double(r.mean_r_exp),   format_double(r.grad_norm),
            format_double(r.kl_estimate)};
}

} // namespace idforge
