#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "idforge/rl.hpp"

#include <cmath>
#include <functional>

using namespace idforge;

namespace {

Vec fd_grad(const Vec& params, const std::function<double(const Vec&)>& loss, double h = 1e-5) {
    Vec g(params.size());
    Vec p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + h;
        const double up = loss(p);
        p[i] = keep - h;
        const double dn = loss(p);
        p[i] = keep;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

double max_rel_err(const Vec& got, const Vec& want) {
    REQUIRE(got.size() == want.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double denom = std::max({1e-5, std::abs(got[i]), std::abs(want[i])});
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    return worst;
}

CondNet small_net(std::uint64_t seed, std::size_t t_max) {
    Rng rng(seed);
    return make_cond_net(2, 4, 3, 3, {6}, t_max, rng);
}

Trajectory roll(const CondNet& net, std::size_t y, const NoiseSchedule& s, std::uint64_t seed) {
    Rng rng(seed);
    return sample_trajectory(net, y, s, rng);
}

} // namespace

TEST_CASE("timestep selection covers eligible steps and rescales") {
    const NoiseSchedule s = build_schedule(6);
    Rng rng(1);

    const TimestepSelection all = select_timesteps(s, 0, rng);
    CHECK(all.ts == std::vector<std::size_t>{2, 3, 4, 5, 6});
    CHECK(all.rescale == 1.0);

    const TimestepSelection capped = select_timesteps(s, 99, rng);
    CHECK(capped.ts.size() == 5);
    CHECK(capped.rescale == 1.0);

    Rng r2(7), r3(7);
    const TimestepSelection a = select_timesteps(s, 2, r2);
    const TimestepSelection b = select_timesteps(s, 2, r3);
    CHECK(a.ts == b.ts); // deterministic
    CHECK(a.ts.size() == 2);
    CHECK(a.rescale == doctest::Approx(5.0 / 2.0));
    CHECK(a.ts[0] < a.ts[1]); // sorted, distinct
    for (std::size_t t : a.ts) {
        CHECK(t >= 2);
        CHECK(t <= 6);
    }

    const NoiseSchedule s1 = build_schedule(1, 0.1, 0.1);
    Rng r4(1);
    CHECK(select_timesteps(s1, 0, r4).ts.empty());
}

TEST_CASE("single-transition gradient equals the Gaussian score closed form") {
    // Linear denoiser (no hidden layer) on a 1-d state so every partial is
    // writable by hand: eps_hat = w . input + b.
    const NoiseSchedule s = build_schedule(2, 0.1, 0.2);
    Rng rng(5);
    CondNet net = make_cond_net(1, 4, 2, 2, {}, 2, rng);
    REQUIRE(net.trunk.layers.size() == 1);

    Trajectory traj;
    traj.class_id = 1;
    traj.schedule_fingerprint = s.fingerprint();
    traj.states = {Vec{0.8}, Vec{-0.3}, Vec{0.25}}; // x_2, x_1, x_0

    const std::size_t t = 2;
    const double sd = s.sigma(t);
    const CondGrads grads = trajectory_logprob_grads(net, traj, s, {t});

    // Recompute everything with scalars.
    const Vec tf = time_features(t, 4);
    Vec input = {0.8};
    input.insert(input.end(), tf.begin(), tf.end());
    input.push_back(net.class_embed.at(1, 0));
    input.push_back(net.class_embed.at(1, 1));

    double eps_hat = net.trunk.layers[0].b[0];
    for (std::size_t j = 0; j < input.size(); ++j) {
        eps_hat += net.trunk.layers[0].w.at(0, j) * input[j];
    }
    const double c = s.beta_at(t) / std::sqrt(1.0 - s.alpha_bar_at(t));
    const double mu = (0.8 - c * eps_hat) / std::sqrt(s.alpha_at(t));
    const double score = (-0.3 - mu) / (sd * sd);
    const double dmu_deps = -c / std::sqrt(s.alpha_at(t));

    for (std::size_t j = 0; j < input.size(); ++j) {
        const double want = score * dmu_deps * input[j];
        CHECK(grads.trunk.w[0].at(0, j) == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK(grads.trunk.b[0][0] == doctest::Approx(score * dmu_deps).epsilon(1e-12));
    for (std::size_t e = 0; e < 2; ++e) {
        const double want = score * dmu_deps * net.trunk.layers[0].w.at(0, 5 + e);
        CHECK(grads.class_embed.at(1, e) == doctest::Approx(want).epsilon(1e-12));
        CHECK(grads.class_embed.at(0, e) == 0.0);
    }
}

TEST_CASE("trajectory log-prob gradient matches finite differences") {
    const NoiseSchedule s = build_schedule(6);
    CondNet net = small_net(11, 6);
    const Trajectory traj = roll(net, 2, s, 21);

    const std::vector<std::size_t> all = {2, 3, 4, 5, 6};
    const CondGrads grads = trajectory_logprob_grads(net, traj, s, all);
    const Vec analytic = flatten_grads(net, grads);

    CondNet probe = net;
    const Vec numeric = fd_grad(flatten_params(net), [&](const Vec& p) {
        unflatten_params(probe, p);
        return trajectory_logprob(probe, traj, s, all);
    });
    CHECK(max_rel_err(analytic, numeric) < 1e-4);
}

TEST_CASE("gradients are additive over timesteps") {
    const NoiseSchedule s = build_schedule(6);
    CondNet net = small_net(13, 6);
    const Trajectory traj = roll(net, 0, s, 22);

    const Vec both = flatten_grads(net, trajectory_logprob_grads(net, traj, s, {3, 5}));
    Vec parts = flatten_grads(net, trajectory_logprob_grads(net, traj, s, {3}));
    const Vec p5 = flatten_grads(net, trajectory_logprob_grads(net, traj, s, {5}));
    for (std::size_t i = 0; i < parts.size(); ++i) parts[i] += p5[i];
    for (std::size_t i = 0; i < parts.size(); ++i) {
        CHECK(both[i] == doctest::Approx(parts[i]).epsilon(1e-12));
    }

    CHECK(trajectory_logprob(net, traj, s, {3, 5}) ==
          doctest::Approx(trajectory_logprob(net, traj, s, {3}) +
                          trajectory_logprob(net, traj, s, {5}))
              .epsilon(1e-13));
}

TEST_CASE("mismatched schedules and degenerate timesteps are rejected") {
    const NoiseSchedule s = build_schedule(6);
    const NoiseSchedule other = build_schedule(6, 0.01, 0.3);
    CondNet net = small_net(15, 6);
    const Trajectory traj = roll(net, 1, s, 23);

    CHECK_THROWS_AS(trajectory_logprob_grads(net, traj, other, {3}), StateError);
    CHECK_THROWS_AS(trajectory_logprob(net, traj, other, {3}), StateError);
    CHECK_THROWS_AS(trajectory_logprob_grads(net, traj, s, {1}), ArgumentError);
}

TEST_CASE("policy update anchors") {
    const NoiseSchedule s = build_schedule(6);
    CondNet net = small_net(17, 6);
    const CondNet ref = net;
    RlConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.kl_weight = 0.0;
    const TimestepSelection sel = {{2, 3, 4, 5, 6}, 1.0};

    std::vector<Trajectory> trajs;
    for (std::size_t i = 0; i < 8; ++i) trajs.push_back(roll(net, i % 3, s, 100 + i));

    SUBCASE("zero rewards, zero kl: parameters unchanged") {
        const auto [next, report] =
            policy_update(net, trajs, std::vector<double>(8, 0.0), ref, s, cfg, sel);
        CHECK(flatten_params(next) == flatten_params(net));
        CHECK(report.grad_norm == 0.0);
        CHECK(report.mean_reward == 0.0);
    }

    SUBCASE("unit reward on one trajectory follows the log-prob gradient") {
        const auto [next, report] =
            policy_update(net, {trajs[0]}, {1.0}, ref, s, cfg, sel);
        const Vec g = flatten_grads(net, trajectory_logprob_grads(net, trajs[0], s, sel.ts));
        const Vec before = flatten_params(net);
        const Vec after = flatten_params(next);
        for (std::size_t i = 0; i < before.size(); ++i) {
            CHECK(after[i] == doctest::Approx(before[i] + cfg.learning_rate * g[i])
                                  .epsilon(1e-10));
        }
        CHECK(report.kl_estimate == 0.0); // same params as reference
    }

    SUBCASE("mixed rewards equal the accumulated weighted gradient") {
        std::vector<double> rewards = {0.5, -0.25, 1.0, 0.0, -1.0, 0.75, 0.1, -0.6};
        const auto [next, report] = policy_update(net, trajs, rewards, ref, s, cfg, sel);

        Vec want = flatten_params(net);
        for (std::size_t i = 0; i < trajs.size(); ++i) {
            const Vec g = flatten_grads(net, trajectory_logprob_grads(net, trajs[i], s, sel.ts));
            for (std::size_t j = 0; j < want.size(); ++j) {
                want[j] += cfg.learning_rate * rewards[i] * g[j] / 8.0;
            }
        }
        const Vec after = flatten_params(next);
        for (std::size_t j = 0; j < want.size(); ++j) {
            CHECK(after[j] == doctest::Approx(want[j]).epsilon(1e-9));
        }
    }

    SUBCASE("non-finite rewards reject the step") {
        std::vector<double> rewards(8, 0.0);
        rewards[3] = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(policy_update(net, trajs, rewards, ref, s, cfg, sel), NumericError);
    }

    SUBCASE("reward/trajectory size mismatch") {
        CHECK_THROWS_AS(policy_update(net, trajs, {1.0}, ref, s, cfg, sel), ArgumentError);
    }
}

TEST_CASE("strong KL pull moves the policy toward the reference") {
    const NoiseSchedule s = build_schedule(6);
    CondNet ref = small_net(19, 6);

    // Perturb a copy away from the reference.
    CondNet net = ref;
    Vec p = flatten_params(net);
    Rng noise(3);
    for (auto& v : p) v += 0.05 * noise.normal();
    unflatten_params(net, p);

    std::vector<Trajectory> trajs;
    for (std::size_t i = 0; i < 4; ++i) trajs.push_back(roll(net, i % 3, s, 200 + i));
    const std::vector<double> rewards(4, 0.0);

    RlConfig cfg;
    cfg.learning_rate = 5e-2;
    cfg.kl_weight = 1.0;
    const TimestepSelection sel = {{2, 3, 4, 5, 6}, 1.0};

    double first_kl = -1.0, last_kl = -1.0;
    for (int it = 0; it < 25; ++it) {
        auto [next, report] = policy_update(net, trajs, rewards, ref, s, cfg, sel);
        if (it == 0) first_kl = report.kl_estimate;
        last_kl = report.kl_estimate;
        net = std::move(next);
    }
    CHECK(first_kl > 0.0);
    CHECK(last_kl < 0.5 * first_kl);
}

TEST_CASE("rl fine-tuning is deterministic and respects step count") {
    const NoiseSchedule s = build_schedule(6);
    CondNet theta0 = small_net(23, 6);
    FeatureExtractor ex = make_feature_extractor(2, 4, {8}, 77);

    Rng bank_rng(31);
    std::map<std::size_t, std::vector<Vec>> by_id;
    for (std::size_t y = 0; y < 3; ++y) {
        for (int i = 0; i < 4; ++i) by_id[y].push_back(normalized(bank_rng.normal_vec(4)));
    }
    const MemoryBank bank = build_bank(by_id);

    RewardWeights w;
    RlConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 2;
    cfg.identities_per_step = 2;
    cfg.seed = 5;

    const RlResult r0 = rl_finetune(theta0, bank, ex, w, RlConfig{.steps = 0}, s);
    CHECK(flatten_params(r0.net) == flatten_params(theta0));
    CHECK(r0.history.empty());

    const RlResult a = rl_finetune(theta0, bank, ex, w, cfg, s);
    const RlResult b = rl_finetune(theta0, bank, ex, w, cfg, s);
    CHECK(!a.aborted);
    REQUIRE(a.history.size() == 3);
    REQUIRE(b.history.size() == 3);
    CHECK(flatten_params(a.net) == flatten_params(b.net));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.history[i].mean_reward == b.history[i].mean_reward);
        CHECK(a.history[i].grad_norm == b.history[i].grad_norm);
        CHECK(a.history[i].kl_estimate == b.history[i].kl_estimate);
        CHECK(a.history[i].step == i);
        CHECK(std::isfinite(a.history[i].mean_r_sem));
        CHECK(std::isfinite(a.history[i].mean_r_cov));
        CHECK(std::isfinite(a.history[i].mean_r_exp));
    }
    // Parameters actually moved.
    CHECK(flatten_params(a.net) != flatten_params(theta0));

    const auto header = rl_history_csv_header();
    const auto row = rl_history_csv_row(a.history[0]);
    CHECK(row.size() == header.size());
}
