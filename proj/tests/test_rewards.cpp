#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "idforge/rewards.hpp"
#include "idforge/rng.hpp"

#include <cmath>

using namespace idforge;

namespace {

Vec unit(std::initializer_list<double> v) { return normalized(Vec(v)); }

std::vector<Vec> random_units(Rng& rng, std::size_t n, std::size_t dim) {
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(normalized(rng.normal_vec(dim)));
    return out;
}

MemoryBank random_bank(Rng& rng, std::size_t ids, std::size_t per_id, std::size_t dim) {
    std::map<std::size_t, std::vector<Vec>> by_id;
    for (std::size_t y = 0; y < ids; ++y) by_id[y] = random_units(rng, per_id, dim);
    return build_bank(by_id);
}

} // namespace

TEST_CASE("bank construction computes prototypes and traces") {
    SUBCASE("single feature: prototype is the normalized feature") {
        const Vec f = {3.0, 4.0};
        const MemoryBank bank = build_bank({{0, {f}}});
        CHECK(bank.at(0).prototype == unit({3.0, 4.0}));
        CHECK(bank.at(0).count() == 1);
        CHECK(!bank.at(0).has_trace);
    }

    SUBCASE("antipodal features make a degenerate prototype") {
        CHECK_THROWS_AS(build_bank({{0, {Vec{1.0, 0.0}, Vec{-1.0, 0.0}}}}), NumericError);
    }

    SUBCASE("random bank matches scalar recomputation") {
        Rng rng(5);
        const auto feats = random_units(rng, 5, 4);
        const MemoryBank bank = build_bank({{3, feats}});
        const BankEntry& e = bank.at(3);

        // Scalar: normalize (already unit), mean, normalize.
        Vec mean(4, 0.0);
        for (const auto& f : feats) {
            for (std::size_t i = 0; i < 4; ++i) mean[i] += f[i] / 5.0;
        }
        double n = 0.0;
        for (double v : mean) n += v * v;
        n = std::sqrt(n);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(e.prototype[i] == doctest::Approx(mean[i] / n).epsilon(1e-13));
        }

        // Trace vs explicit covariance-matrix trace.
        REQUIRE(e.has_trace);
        double tr = 0.0;
        for (std::size_t d = 0; d < 4; ++d) {
            double mu = mean[d], acc = 0.0;
            for (const auto& f : feats) acc += (f[d] - mu) * (f[d] - mu);
            tr += acc / 4.0; // n - 1
        }
        CHECK(e.trace == doctest::Approx(tr).epsilon(1e-12));

        for (const auto& f : e.feats) CHECK(std::abs(norm(f) - 1.0) < 1e-9);
    }

    SUBCASE("errors") {
        CHECK_THROWS_AS(build_bank({}), ArgumentError);
        CHECK_THROWS_AS(build_bank({{0, {}}}), ArgumentError);
        const MemoryBank bank = build_bank({{2, {Vec{1.0, 0.0}}}});
        CHECK_THROWS_AS(bank.at(7), LabelError);
    }
}

TEST_CASE("semantic reward anchors and monotonicity") {
    const MemoryBank bank = build_bank({{0, {Vec{1.0, 0.0}}}});
    CHECK(semantic_reward(Vec{1.0, 0.0}, bank, 0) == 1.0);
    CHECK(semantic_reward(Vec{-1.0, 0.0}, bank, 0) == 0.0);
    CHECK(semantic_reward(Vec{0.0, 1.0}, bank, 0) == 0.5);

    double prev = -1.0;
    for (double theta : {3.0, 2.0, 1.0, 0.5, 0.0}) { // decreasing angle = rising cosine
        const double r = semantic_reward(Vec{std::cos(theta), std::sin(theta)}, bank, 0);
        CHECK(r > prev);
        prev = r;
    }

    CHECK_THROWS_AS(semantic_reward(Vec{1.0, 0.0}, bank, 4), LabelError);
    CHECK_THROWS_AS(semantic_reward(Vec{2.0, 0.0}, bank, 0), ArgumentError);
}

TEST_CASE("rbf kernel closed forms and symmetry") {
    const Vec u = {1.0, 0.0};
    const Vec v = {0.0, 1.0};
    CHECK(rbf_kernel(u, u, 0.7) == 1.0);
    CHECK(rbf_kernel(u, v, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

    Rng rng(9);
    for (int rep = 0; rep < 100; ++rep) {
        const Vec a = rng.normal_vec(5);
        const Vec b = rng.normal_vec(5);
        const double sigma = 0.2 + rng.uniform();
        double d2 = 0.0;
        for (std::size_t i = 0; i < 5; ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
        const double want = std::exp(-d2 / (2.0 * sigma * sigma));
        const double got = rbf_kernel(a, b, sigma);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
        CHECK(got == rbf_kernel(b, a, sigma));
        CHECK(got > 0.0);
        CHECK(got <= 1.0);
    }
    CHECK_THROWS_AS(rbf_kernel(u, v, 0.0), ArgumentError);
    CHECK_THROWS_AS(rbf_kernel(u, v, -1.0), ArgumentError);
}

TEST_CASE("coverage reward anchors and brute-force oracle") {
    SUBCASE("single matching pair gives 1 - alpha") {
        const MemoryBank bank = build_bank({{0, {Vec{1.0, 0.0}}}});
        const double r = coverage_reward({Vec{1.0, 0.0}}, bank, 0, 0.5, 0.3);
        CHECK(r == doctest::Approx(1.0 - 0.3).epsilon(1e-15));
    }

    SUBCASE("identical generated far from references approaches -alpha") {
        const MemoryBank bank = build_bank({{0, {Vec{1.0, 0.0}}}});
        const std::vector<Vec> gens(3, Vec{-1.0, 0.0}); // squared distance 4
        const double r = coverage_reward(gens, bank, 0, 0.3, 0.6);
        CHECK(r == doctest::Approx(-0.6).epsilon(1e-6)); // cross ~ exp(-22)
    }

    SUBCASE("matches a brute-force double loop") {
        Rng rng(11);
        for (int rep = 0; rep < 50; ++rep) {
            const auto refs = random_units(rng, 4, 3);
            const auto gens = random_units(rng, 3, 3);
            const MemoryBank bank = build_bank({{1, refs}});
            const double sigma = 0.3 + rng.uniform();
            const double alpha = 0.1 + rng.uniform();

            double cross = 0.0;
            for (const auto& g : gens) {
                for (const auto& f : bank.at(1).feats) {
                    double d2 = 0.0;
                    for (std::size_t i = 0; i < 3; ++i) d2 += (g[i] - f[i]) * (g[i] - f[i]);
                    cross += std::exp(-d2 / (2.0 * sigma * sigma));
                }
            }
            cross /= 12.0;
            double within = 0.0;
            for (const auto& g : gens) {
                for (const auto& h : gens) {
                    double d2 = 0.0;
                    for (std::size_t i = 0; i < 3; ++i) d2 += (g[i] - h[i]) * (g[i] - h[i]);
                    within += std::exp(-d2 / (2.0 * sigma * sigma));
                }
            }
            within /= 9.0;

            const double got = coverage_reward(gens, bank, 1, sigma, alpha);
            CHECK(got == doctest::Approx(cross - alpha * within).epsilon(1e-12));

            // Permutation invariance of the generated set.
            std::vector<Vec> shuffled = {gens[2], gens[0], gens[1]};
            CHECK(coverage_reward(shuffled, bank, 1, sigma, alpha) ==
                  doctest::Approx(got).epsilon(1e-14));

            // Excluding the diagonal removes the B self-kernels.
            const double no_self = coverage_reward(gens, bank, 1, sigma, alpha, false);
            const double within_off = (within * 9.0 - 3.0) / 6.0;
            CHECK(no_self == doctest::Approx(cross - alpha * within_off).epsilon(1e-12));
        }
    }

    SUBCASE("errors") {
        const MemoryBank bank = build_bank({{0, {Vec{1.0, 0.0}}}});
        CHECK_THROWS_AS(coverage_reward({}, bank, 0, 0.5, 0.3), ArgumentError);
        CHECK_THROWS_AS(coverage_reward({Vec{1.0, 0.0}}, bank, 9, 0.5, 0.3), LabelError);
        CHECK_THROWS_AS(coverage_reward({Vec{1.0, 0.0}}, bank, 0, 0.0, 0.3), ArgumentError);
    }
}

TEST_CASE("collapsed generations score lower coverage at equal cross-alignment") {
    // References symmetric about the bisector; all generated points sit on
    // the bisector so every one is equidistant from both references.
    const MemoryBank bank = build_bank({{0, {Vec{1.0, 0.0}, Vec{0.0, 1.0}}}});
    const Vec m = unit({1.0, 1.0});
    const double sigma = 1.0, alpha = 0.5;

    auto k_at = [&](double t) {
        const Vec g = scaled(m, t);
        return rbf_kernel(g, Vec{1.0, 0.0}, sigma);
    };
    // Find t0 with k(t0) = (k(t1) + k(t2))/2 so cross terms match exactly.
    const double t1 = 0.75, t2 = 1.5;
    const double target = 0.5 * (k_at(t1) + k_at(t2));
    double lo = 1.0 / std::sqrt(2.0), hi = t2; // k decreasing on [lo, hi]
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (k_at(mid) > target ? lo : hi) = mid;
    }
    const double t0 = 0.5 * (lo + hi);

    const std::vector<Vec> collapsed = {scaled(m, t0), scaled(m, t0)};
    const std::vector<Vec> spread = {scaled(m, t1), scaled(m, t2)};
    const double r_collapsed = coverage_reward(collapsed, bank, 0, sigma, alpha);
    const double r_spread = coverage_reward(spread, bank, 0, sigma, alpha);
    CHECK(r_collapsed < r_spread - 1e-6);
}

TEST_CASE("trace of the sample covariance") {
    // Dyadic values whose mean is exact, so the zero is exact too.
    CHECK(trace_cov({Vec{0.75, 1.5}, Vec{0.75, 1.5}, Vec{0.75, 1.5}}) == 0.0);
    CHECK(trace_cov({Vec{1.0, 0.0}, Vec{-1.0, 0.0}}) == doctest::Approx(2.0).epsilon(1e-15));

    Rng rng(13);
    const auto feats = random_units(rng, 6, 4);
    // Explicit covariance matrix, then its trace.
    Vec mean(4, 0.0);
    for (const auto& f : feats)
        for (std::size_t i = 0; i < 4; ++i) mean[i] += f[i] / 6.0;
    double tr = 0.0;
    for (std::size_t a = 0; a < 4; ++a) {
        double cov_aa = 0.0;
        for (const auto& f : feats) cov_aa += (f[a] - mean[a]) * (f[a] - mean[a]);
        tr += cov_aa / 5.0;
    }
    CHECK(trace_cov(feats) == doctest::Approx(tr).epsilon(1e-12));

    CHECK_THROWS_AS(trace_cov({Vec{1.0}}), ArgumentError);
}

TEST_CASE("expansion reward anchors, monotonicity, and sign") {
    CHECK(expansion_reward(1.1 * 2.0, 2.0, 0.1, 0.4) == 0.0);
    CHECK(expansion_reward(1.5, 1.0, 0.0, 0.5) == doctest::Approx(-1.0).epsilon(1e-15));

    Rng rng(15);
    for (int rep = 0; rep < 100; ++rep) {
        const double s_g = 3.0 * rng.uniform();
        const double s_r = 3.0 * rng.uniform();
        const double eps = 0.2 * rng.uniform();
        const double tau = 0.1 + rng.uniform();
        const double dev = (s_g - (1.0 + eps) * s_r) / tau;
        const double got = expansion_reward(s_g, s_r, eps, tau);
        CHECK(got == doctest::Approx(-dev * dev).epsilon(1e-13));
        CHECK(got <= 0.0);
    }

    // Strictly decreasing in |s_g - target|.
    const double target = 1.1 * 2.0;
    double prev = 1.0;
    for (double off : {0.0, 0.3, 0.8, 1.5}) {
        const double r = expansion_reward(target + off, 2.0, 0.1, 0.5);
        CHECK(r < prev);
        prev = r;
    }

    // Collapse (s_g = 0) is the worst value over [0, target].
    const double at_zero = expansion_reward(0.0, 2.0, 0.1, 0.5);
    for (double s : {0.2, 0.9, 1.7, target}) {
        CHECK(at_zero < expansion_reward(s, 2.0, 0.1, 0.5));
    }

    CHECK_THROWS_AS(expansion_reward(1.0, 1.0, 0.1, 0.0), ArgumentError);
    CHECK_THROWS_AS(expansion_reward(-1.0, 1.0, 0.1, 0.5), ArgumentError);
}

TEST_CASE("standardization closed forms") {
    const auto zeros = standardize({0.75, 0.75, 0.75}, 1e-8); // exact mean
    for (double v : zeros) CHECK(v == 0.0);

    const auto pm = standardize({-1.0, 1.0}, 1e-8);
    CHECK(pm[0] == doctest::Approx(-1.0 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(pm[1] == doctest::Approx(1.0 / (1.0 + 1e-8)).epsilon(1e-15));

    Rng rng(17);
    std::vector<double> vals;
    for (int i = 0; i < 64; ++i) vals.push_back(rng.normal() * 3.0 + 1.0);
    const double eps = 1e-8;
    const auto out = standardize(vals, eps);

    double mean = 0.0;
    for (double v : vals) mean += v / 64.0;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean) / 64.0;
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        CHECK(out[i] == doctest::Approx((vals[i] - mean) / (sd + eps)).epsilon(1e-12));
    }
    double out_mean = 0.0, out_var = 0.0;
    for (double v : out) out_mean += v / 64.0;
    for (double v : out) out_var += (v - out_mean) * (v - out_mean) / 64.0;
    CHECK(std::abs(out_mean) < 1e-12);
    CHECK(std::sqrt(out_var) == doctest::Approx(sd / (sd + eps)).epsilon(1e-10));

    CHECK_THROWS_AS(standardize({}, 1e-8), ArgumentError);
}

TEST_CASE("combination is the weighted tanh") {
    RewardWeights w; // paper weights 1.0 / 0.75 / 0.25
    CHECK(combine(0.0, 0.0, 0.0, w) == 0.0);
    CHECK(combine(1.0, 1.0, 1.0, w) == doctest::Approx(std::tanh(2.0)).epsilon(1e-15));
    CHECK(std::abs(combine(1.0, 1.0, 1.0, w) - 0.9640275800758169) < 1e-12);
    const double sat = combine(50.0, 50.0, 50.0, w);
    CHECK(sat < 1.0);
    CHECK(sat > 0.999);
    CHECK(combine(-50.0, -50.0, -50.0, w) > -1.0);
}

TEST_CASE("median bandwidth heuristic") {
    // Distances: ||a-b|| = sqrt(2), ||a-c|| = 2, ||b-c|| = sqrt(2).
    const MemoryBank bank =
        build_bank({{0, {Vec{1.0, 0.0}, Vec{0.0, 1.0}}}, {1, {Vec{-1.0, 0.0}}}});
    CHECK(median_pairwise_distance(bank) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

    RewardWeights w;
    const RewardWeights r = resolved_weights(w, bank);
    CHECK(r.sigma == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    // Explicit sigma wins over the heuristic.
    w.sigma = 0.77;
    CHECK(resolved_weights(w, bank).sigma == 0.77);

    const MemoryBank tiny = build_bank({{0, {Vec{1.0, 0.0}}}});
    CHECK_THROWS_AS(median_pairwise_distance(tiny), ArgumentError);
}

TEST_CASE("batch scoring composes the components") {
    Rng rng(21);
    const MemoryBank bank = random_bank(rng, 3, 5, 4);
    RewardWeights w;
    w.sigma = 0.9;
    w.tau = 0.3;

    SUBCASE("batch of one is neutral after standardization") {
        const auto gens = random_units(rng, 1, 4);
        const auto bds = compute_batch(gens, 1, bank, w);
        REQUIRE(bds.size() == 1);
        CHECK(bds[0].r_sem_std == 0.0);
        CHECK(bds[0].r_cov_std == 0.0);
        CHECK(bds[0].r_exp_std == 0.0);
        CHECK(bds[0].r_norm == 0.0);
        CHECK(bds[0].r_exp == 0.0); // single sample: no spread estimate
    }

    SUBCASE("prototype-only batch is symmetric across samples") {
        const Vec proto = bank.at(2).prototype;
        const std::vector<Vec> gens(4, proto);
        const auto bds = compute_batch(gens, 2, bank, w);
        REQUIRE(bds.size() == 4);
        for (const auto& bd : bds) {
            CHECK(bd.r_sem == bds[0].r_sem);
            CHECK(bd.r_norm == bds[0].r_norm);
            CHECK(bd.r_sem_std == 0.0); // identical values standardize to zero
        }
    }

    SUBCASE("straight-line compositional oracle") {
        const auto gens = random_units(rng, 4, 4);
        const auto bds = compute_batch(gens, 0, bank, w);
        REQUIRE(bds.size() == 4);

        std::vector<double> sems;
        for (const auto& g : gens) sems.push_back(semantic_reward(g, bank, 0));
        const double cov = coverage_reward(gens, bank, 0, w.sigma, w.alpha, true);
        const double s_g = trace_cov(gens);
        const double exp_r = expansion_reward(s_g, bank.at(0).trace, w.epsilon_expand, w.tau);

        // Scalar standardization of the semantic values.
        double mu = 0.0;
        for (double v : sems) mu += v / 4.0;
        double var = 0.0;
        for (double v : sems) var += (v - mu) * (v - mu) / 4.0;
        const double denom = std::sqrt(var) + w.eps_std;

        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(bds[i].r_sem == doctest::Approx(sems[i]).epsilon(1e-14));
            CHECK(bds[i].r_cov == doctest::Approx(cov).epsilon(1e-14));
            CHECK(bds[i].r_exp == doctest::Approx(exp_r).epsilon(1e-14));
            const double sem_std = (sems[i] - mu) / denom;
            CHECK(bds[i].r_sem_std == doctest::Approx(sem_std).epsilon(1e-12));
            // Single-batch step: cov/exp populations have one element each.
            CHECK(bds[i].r_cov_std == 0.0);
            CHECK(bds[i].r_exp_std == 0.0);
            const double want = std::tanh(w.lambda_sem * sem_std);
            CHECK(bds[i].r_norm == doctest::Approx(want).epsilon(1e-12));
            CHECK(bds[i].r_norm > -1.0);
            CHECK(bds[i].r_norm < 1.0);
            CHECK(bds[i].r_sem >= 0.0);
            CHECK(bds[i].r_sem <= 1.0);
            CHECK(bds[i].r_exp <= 0.0);
        }
    }

    SUBCASE("bank without a spread target rejects multi-sample batches") {
        const MemoryBank single = build_bank({{0, {Vec{1.0, 0.0, 0.0, 0.0}}}});
        const auto gens = random_units(rng, 3, 4);
        CHECK_THROWS_AS(score_identity_batch(gens, 0, single, w), StateError);
    }
}

TEST_CASE("step finalization standardizes across identity batches") {
    RewardWeights w;
    w.sigma = 1.0;

    // Hand-built raw scores: two identity batches.
    IdentityBatchScore a;
    a.y = 0;
    a.r_sem = {0.2, 0.4};
    a.r_cov = 0.5;
    a.r_exp = -1.0;
    IdentityBatchScore b;
    b.y = 1;
    b.r_sem = {0.6, 0.8};
    b.r_cov = 0.9;
    b.r_exp = -3.0;

    const auto out = finalize_step({a, b}, w);
    REQUIRE(out.size() == 2);

    // Pooled semantic population {0.2, 0.4, 0.6, 0.8}: mean 0.5, sd sqrt(0.05).
    const double sd = std::sqrt(0.05);
    CHECK(out[0][0].r_sem_std == doctest::Approx((0.2 - 0.5) / (sd + w.eps_std)).epsilon(1e-12));
    CHECK(out[1][1].r_sem_std == doctest::Approx((0.8 - 0.5) / (sd + w.eps_std)).epsilon(1e-12));

    // Coverage population {0.5, 0.9}: standardized to -1, +1 (up to eps).
    CHECK(out[0][0].r_cov_std == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(out[1][0].r_cov_std == doctest::Approx(1.0).epsilon(1e-6));
    // Expansion population {-1, -3}.
    CHECK(out[0][0].r_exp_std == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out[1][0].r_exp_std == doctest::Approx(-1.0).epsilon(1e-6));

    // Broadcast: same batch values for every sample in a batch.
    CHECK(out[0][0].r_cov_std == out[0][1].r_cov_std);
    CHECK(out[0][0].r_exp_std == out[0][1].r_exp_std);

    SUBCASE("shift invariance of the combined reward") {
        IdentityBatchScore a2 = a, b2 = b;
        const double c = 7.3;
        for (auto& v : a2.r_sem) v += c;
        for (auto& v : b2.r_sem) v += c;
        a2.r_cov += c;
        b2.r_cov += c;
        a2.r_exp += c;
        b2.r_exp += c;
        const auto shifted = finalize_step({a2, b2}, w);
        for (std::size_t bi = 0; bi < 2; ++bi) {
            for (std::size_t i = 0; i < out[bi].size(); ++i) {
                CHECK(shifted[bi][i].r_norm == doctest::Approx(out[bi][i].r_norm).epsilon(1e-12));
            }
        }
    }

    SUBCASE("per-identity semantic standardization is config-gated") {
        RewardWeights wp = w;
        wp.per_identity_standardize = true;
        const auto per_id = finalize_step({a, b}, wp);
        // Batch a alone: {0.2, 0.4} -> -1, +1 (up to eps).
        CHECK(per_id[0][0].r_sem_std == doctest::Approx(-1.0).epsilon(1e-6));
        CHECK(per_id[0][1].r_sem_std == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(per_id[1][0].r_sem_std == doctest::Approx(-1.0).epsilon(1e-6));
    }
}

TEST_CASE("reward csv rows align with the header") {
    RewardBreakdown bd;
    bd.r_sem = 0.5;
    bd.r_norm = 0.25;
    const auto header = reward_csv_header();
    const auto row = reward_csv_row(3, 1, 2, bd);
    CHECK(row.size() == header.size());
    CHECK(row[0] == "3");
    CHECK(row[1] == "1");
    CHECK(row[2] == "2");
    CHECK(row[3] == "0.5");
    CHECK(row[9] == "0.25");
}

TEST_CASE("range properties hold over random instances") {
    Rng rng(31);
    for (int rep = 0; rep < 100; ++rep) {
        const MemoryBank bank = random_bank(rng, 2, 3, 4);
        RewardWeights w;
        w.sigma = 0.2 + rng.uniform();
        w.tau = 0.1 + rng.uniform();
        const auto gens = random_units(rng, 2 + rng.uniform_index(3), 4);
        const std::size_t y = rng.uniform_index(2);
        const auto bds = compute_batch(gens, y, bank, w);
        for (const auto& bd : bds) {
            CHECK(bd.r_sem >= 0.0);
            CHECK(bd.r_sem <= 1.0);
            CHECK(bd.r_exp <= 0.0);
            CHECK(bd.r_norm > -1.0);
            CHECK(bd.r_norm < 1.0);
        }
    }
}
