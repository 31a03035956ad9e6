#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "idforge/downstream.hpp"
#include "idforge/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace idforge;

namespace {

Mlp toy_net(std::uint64_t seed, std::size_t in, std::size_t classes) {
    Rng rng(seed);
    return make_mlp({in, 12, classes}, Activation::Tanh, Activation::Identity, rng);
}

std::vector<LabeledSample> random_samples(Rng& rng, std::size_t n, std::size_t dim,
                                          std::size_t classes, Origin origin) {
    std::vector<LabeledSample> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({rng.normal_vec(dim), rng.uniform_index(classes), origin});
    return out;
}

} // namespace

TEST_CASE("virtual step with zero learning rate is the identity") {
    Mlp net = toy_net(1, 3, 4);
    Rng rng(2);
    const auto batch = random_samples(rng, 6, 3, 4, Origin::Real);
    const Mlp stepped = virtual_step(net, batch, 0.0);
    CHECK(flatten_params(stepped) == flatten_params(net));
}

TEST_CASE("virtual step matches a direct sgd step") {
    Mlp net = toy_net(3, 4, 3);
    Rng rng(4);
    const auto one = random_samples(rng, 1, 4, 3, Origin::Real);
    const Mlp got = virtual_step(net, one, 0.2);
    const Mlp want = sgd_step(net, id_loss(net, one).grads, 0.2);
    CHECK(flatten_params(got) == flatten_params(want));
}

TEST_CASE("virtual step equals the gradient-accumulation oracle") {
    Mlp net = toy_net(5, 4, 5);
    Rng rng(6);
    auto batch = random_samples(rng, 7, 4, 5, Origin::Real);
    batch[2].origin = Origin::Synthetic; // mixed origins are fine here
    const double lr = 0.15;

    const Vec before = flatten_params(net);
    const Mlp got = virtual_step(net, batch, lr);

    // Average per-sample gradients independently, then step by hand.
    Vec mean_grad(before.size(), 0.0);
    for (const LabeledSample& s : batch) {
        const Vec g = flatten_grads(net, id_loss(net, {s}).grads);
        for (std::size_t i = 0; i < g.size(); ++i)
            mean_grad[i] += g[i] / static_cast<double>(batch.size());
    }
    const Vec after = flatten_params(got);
    for (std::size_t i = 0; i < after.size(); ++i)
        CHECK(after[i] == doctest::Approx(before[i] - lr * mean_grad[i]).epsilon(1e-12));

    CHECK(flatten_params(net) == before); // input untouched
}

TEST_CASE("utility delta basics") {
    Mlp net = toy_net(7, 3, 4);
    Rng rng(8);
    const auto batch = random_samples(rng, 8, 3, 4, Origin::Real);
    LabeledSample cand = {rng.normal_vec(3), 2, Origin::Synthetic};

    SUBCASE("unchanged parameters give exactly zero") {
        CHECK(utility_delta(net, net, cand) == 0.0);
    }

    SUBCASE("real-origin candidates are rejected") {
        LabeledSample real = cand;
        real.origin = Origin::Real;
        CHECK_THROWS_AS(utility_delta(net, virtual_step(net, batch, 0.1), real), ArgumentError);
    }

    SUBCASE("matches a straight-line recomputation of both losses") {
        const Mlp stepped = virtual_step(net, batch, 0.3);
        const double got = utility_delta(net, stepped, cand);

        auto ce = [&](const Mlp& m) {
            const Vec logits = mlp_forward(m, cand.x);
            double z = 0.0;
            for (double v : logits) z += std::exp(v);
            return -std::log(std::exp(logits[cand.y]) / z);
        };
        CHECK(got == doctest::Approx(ce(stepped) - ce(net)).epsilon(1e-12));
    }

    SUBCASE("small-lr limit follows the negative gradient norm") {
        // Candidate alone in the virtual batch: dl/dlr at 0+ is -||grad||^2.
        const double lr = 1e-6;
        const Mlp stepped = virtual_step(net, std::vector<LabeledSample>{cand}, lr);
        const double delta = utility_delta(net, stepped, cand);
        const double gsq = grad_sumsq(id_loss(net, {cand}).grads);
        REQUIRE(gsq > 1e-6);
        CHECK(delta < 0.0);
        CHECK(delta / lr == doctest::Approx(-gsq).epsilon(1e-3));
    }
}

TEST_CASE("smallest-indices ordering rules") {
    CHECK(smallest_indices({-0.3, 0.2}, 0.5) == std::vector<std::size_t>{0});
    CHECK(smallest_indices({5.0, 1.0, 1.0, 1.0, 9.0}, 0.5) ==
          std::vector<std::size_t>{1, 2, 3}); // ceil(2.5)=3, ties by index
    CHECK(smallest_indices({4.0, 3.0, 2.0}, 1.0) == std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(smallest_indices({}, 0.5), ArgumentError);
    CHECK_THROWS_AS(smallest_indices({1.0}, 0.0), ArgumentError);
    CHECK_THROWS_AS(smallest_indices({1.0}, 1.5), ArgumentError);
}

TEST_CASE("selection is invariant under positive affine maps of the deltas") {
    Rng rng(11);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + rng.uniform_index(40);
        Vec deltas(n);
        for (double& d : deltas) d = rng.normal();
        const double frac = 0.05 + 0.95 * rng.uniform();
        const double a = 0.1 + 3.0 * rng.uniform();
        const double b = 5.0 * rng.normal();

        Vec mapped(n);
        for (std::size_t i = 0; i < n; ++i) mapped[i] = a * deltas[i] + b;
        CHECK(smallest_indices(deltas, frac) == smallest_indices(mapped, frac));
    }
}

TEST_CASE("select keeps the smallest-delta candidates per the sort oracle") {
    Mlp net = toy_net(13, 4, 6);
    Rng rng(14);
    const auto base = random_samples(rng, 12, 4, 6, Origin::Real);
    const auto cands = random_samples(rng, 120, 4, 6, Origin::Synthetic);

    SelectionConfig cfg;
    cfg.keep_fraction = 0.25;
    cfg.virtual_lr = 0.2;
    const auto [kept, report] = select(net, cands, base, cfg);

    REQUIRE(report.deltas.size() == 120);
    const std::size_t want_k = 30; // ceil(0.25 * 120)
    REQUIRE(report.kept_indices.size() == want_k);
    REQUIRE(kept.size() == want_k);

    // Brute-force oracle: sort (delta, index) pairs and take the head.
    std::vector<std::size_t> order(120);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (report.deltas[a] != report.deltas[b]) return report.deltas[a] < report.deltas[b];
        return a < b;
    });
    std::vector<std::size_t> want(order.begin(), order.begin() + want_k);
    std::sort(want.begin(), want.end());
    CHECK(report.kept_indices == want);

    for (std::size_t i = 0; i < want_k; ++i) {
        CHECK(kept[i].x == cands[report.kept_indices[i]].x);
        CHECK(kept[i].y == cands[report.kept_indices[i]].y);
    }

    // Every delta matches an independent recomputation.
    const Mlp stepped = virtual_step(net, [&] {
        std::vector<LabeledSample> vb = base;
        vb.insert(vb.end(), cands.begin(), cands.end());
        return vb;
    }(), cfg.virtual_lr);
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(report.deltas[i] == doctest::Approx(utility_delta(net, stepped, cands[i]))
                                      .epsilon(1e-14));
    CHECK(report.loss_before > 0.0);
    CHECK(std::isfinite(report.loss_after));
}

TEST_CASE("keep fraction one preserves all candidates in order") {
    Mlp net = toy_net(17, 3, 3);
    Rng rng(18);
    const auto base = random_samples(rng, 5, 3, 3, Origin::Real);
    const auto cands = random_samples(rng, 9, 3, 3, Origin::Synthetic);

    SelectionConfig cfg;
    cfg.keep_fraction = 1.0;
    const auto [kept, report] = select(net, cands, base, cfg);
    REQUIRE(kept.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(report.kept_indices[i] == i);
        CHECK(kept[i].x == cands[i].x);
    }
}

TEST_CASE("selection is deterministic and mutates nothing") {
    Mlp net = toy_net(19, 4, 4);
    Rng rng(20);
    const auto base = random_samples(rng, 8, 4, 4, Origin::Real);
    const auto cands = random_samples(rng, 16, 4, 4, Origin::Synthetic);
    const Vec params_before = flatten_params(net);
    const auto cands_copy = cands;

    SelectionConfig cfg;
    const auto [kept_a, rep_a] = select(net, cands, base, cfg);
    const auto [kept_b, rep_b] = select(net, cands, base, cfg);
    CHECK(rep_a.deltas == rep_b.deltas);
    CHECK(rep_a.kept_indices == rep_b.kept_indices);
    CHECK(rep_a.loss_before == rep_b.loss_before);
    CHECK(rep_a.loss_after == rep_b.loss_after);

    CHECK(flatten_params(net) == params_before);
    for (std::size_t i = 0; i < cands.size(); ++i) CHECK(cands[i].x == cands_copy[i].x);
}

TEST_CASE("held-out scoring uses only the base batch for the virtual step") {
    Mlp net = toy_net(23, 3, 4);
    Rng rng(24);
    const auto base = random_samples(rng, 10, 3, 4, Origin::Real);
    const auto cands = random_samples(rng, 6, 3, 4, Origin::Synthetic);

    SelectionConfig cfg;
    cfg.include_candidates = false;
    cfg.virtual_lr = 0.25;
    const auto [kept, report] = select(net, cands, base, cfg);

    const Mlp stepped = virtual_step(net, base, cfg.virtual_lr);
    for (std::size_t i = 0; i < cands.size(); ++i)
        CHECK(report.deltas[i] == utility_delta(net, stepped, cands[i]));
    CHECK(report.loss_before == id_loss_value(net, base));
}

TEST_CASE("selection argument validation") {
    Mlp net = toy_net(29, 3, 3);
    Rng rng(30);
    const auto base = random_samples(rng, 4, 3, 3, Origin::Real);
    const auto cands = random_samples(rng, 4, 3, 3, Origin::Synthetic);

    SelectionConfig cfg;
    CHECK_THROWS_AS(select(net, {}, base, cfg), ArgumentError);
    cfg.virtual_lr = 0.0;
    CHECK_THROWS_AS(select(net, cands, base, cfg), ArgumentError);
    cfg.virtual_lr = 0.1;
    cfg.keep_fraction = 0.0;
    CHECK_THROWS_AS(select(net, cands, base, cfg), ArgumentError);
    cfg.keep_fraction = 0.5;
    cfg.include_candidates = false;
    CHECK_THROWS_AS(select(net, cands, {}, cfg), ArgumentError);
    CHECK_THROWS_AS(virtual_step(net, base, -0.1), ArgumentError);
}
