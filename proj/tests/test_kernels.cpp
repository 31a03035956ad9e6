#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "idforge/kernels.hpp"
#include "idforge/rng.hpp"

#include <cmath>
#include <vector>

using namespace idforge;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

// Equivalence tolerance: both variants accumulate the same terms in a
// different order, so the gap is bounded by a few ulps of the magnitude sum.
double reduction_tol(const std::vector<double>& a, const std::vector<double>& b) {
    double mag = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) mag += std::abs(a[i] * b[i]);
    return 1e-13 * mag;
}

const std::vector<std::size_t> kSizes = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 64, 103, 256};

} // namespace

TEST_CASE("scalar anchors") {
    std::vector<double> a = {1.0, 2.0, 3.0};
    std::vector<double> b = {4.0, -5.0, 6.0};
    CHECK(kern::detail::dot_scalar(a.data(), b.data(), 3) == doctest::Approx(12.0));
    CHECK(kern::detail::sumsq_scalar(a.data(), 3) == doctest::Approx(14.0));
    CHECK(kern::detail::sq_dist_scalar(a.data(), b.data(), 3) == doctest::Approx(67.0));

    std::vector<double> y = {1.0, 1.0, 1.0};
    kern::detail::axpy_scalar(2.0, a.data(), y.data(), 3);
    CHECK(y == std::vector<double>{3.0, 5.0, 7.0});
    kern::detail::scal_scalar(0.5, y.data(), 3);
    CHECK(y == std::vector<double>{1.5, 2.5, 3.5});
}

#if defined(__x86_64__)
TEST_CASE("avx2 variants match scalar references") {
    if (!kern::detail::avx2_supported()) {
        MESSAGE("AVX2 unavailable; skipping equivalence checks");
        return;
    }
    Rng rng(2024);
    for (std::size_t n : kSizes) {
        for (int rep = 0; rep < 8; ++rep) {
            auto a = random_vec(rng, n, 3.0);
            auto b = random_vec(rng, n, 3.0);

            const double tol = reduction_tol(a, b);
            CHECK(std::abs(kern::detail::dot_avx2(a.data(), b.data(), n) -
                           kern::detail::dot_scalar(a.data(), b.data(), n)) <= tol);
            CHECK(std::abs(kern::detail::sumsq_avx2(a.data(), n) -
                           kern::detail::sumsq_scalar(a.data(), n)) <= tol);
            CHECK(std::abs(kern::detail::sq_dist_avx2(a.data(), b.data(), n) -
                           kern::detail::sq_dist_scalar(a.data(), b.data(), n)) <= 4.0 * tol);

            auto y1 = random_vec(rng, n);
            auto y2 = y1;
            kern::detail::axpy_scalar(1.7, a.data(), y1.data(), n);
            kern::detail::axpy_avx2(1.7, a.data(), y2.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                // Elementwise op: only FMA contraction can differ.
                CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-15));
            }

            auto s1 = a;
            auto s2 = a;
            kern::detail::scal_scalar(-0.3, s1.data(), n);
            kern::detail::scal_avx2(-0.3, s2.data(), n);
            CHECK(s1 == s2);
        }
    }
}
#endif

TEST_CASE("dispatched matvec family agrees with naive loops") {
    Rng rng(7);
    for (std::size_t rows : {1u, 3u, 8u, 17u}) {
        for (std::size_t cols : {1u, 4u, 9u, 32u}) {
            auto w = random_vec(rng, rows * cols);
            auto x = random_vec(rng, cols);
            auto g = random_vec(rng, rows);

            std::vector<double> y(rows);
            kern::matvec(w.data(), rows, cols, x.data(), y.data());
            for (std::size_t r = 0; r < rows; ++r) {
                double want = 0.0;
                for (std::size_t c = 0; c < cols; ++c) want += w[r * cols + c] * x[c];
                CHECK(y[r] == doctest::Approx(want).epsilon(1e-12));
            }

            std::vector<double> out(cols);
            kern::matvec_t(w.data(), rows, cols, g.data(), out.data());
            for (std::size_t c = 0; c < cols; ++c) {
                double want = 0.0;
                for (std::size_t r = 0; r < rows; ++r) want += w[r * cols + c] * g[r];
                CHECK(out[c] == doctest::Approx(want).epsilon(1e-12));
            }

            auto w2 = w;
            kern::ger(0.9, g.data(), rows, x.data(), cols, w2.data());
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    CHECK(w2[r * cols + c] ==
                          doctest::Approx(w[r * cols + c] + 0.9 * g[r] * x[c]).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("backend dispatch is stable and forceable") {
    const auto original = kern::active_backend();
    kern::force_backend(kern::Backend::Scalar);
    CHECK(kern::backend_name() == "scalar");
    std::vector<double> a = {1.0, 2.0};
    CHECK(kern::dot(a.data(), a.data(), 2) == doctest::Approx(5.0));
#if defined(__x86_64__)
    if (kern::detail::avx2_supported()) {
        kern::force_backend(kern::Backend::Avx2);
        CHECK(kern::backend_name() == "avx2");
        CHECK(kern::dot(a.data(), a.data(), 2) == doctest::Approx(5.0));
    }
#endif
    kern::force_backend(original);
}
