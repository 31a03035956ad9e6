#include "idforge/kernels.hpp"

#include "idforge/errors.hpp"

#include <cstdlib>
#include <string>

namespace idforge::kern {

namespace {

struct Table {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scal)(double, double*, std::size_t);
    double (*sumsq)(const double*, std::size_t);
    double (*sq_dist)(const double*, const double*, std::size_t);
};

constexpr Table kScalarTable{detail::dot_scalar, detail::axpy_scalar, detail::scal_scalar,
                             detail::sumsq_scalar, detail::sq_dist_scalar};

#if defined(__x86_64__)
constexpr Table kAvx2Table{detail::dot_avx2, detail::axpy_avx2, detail::scal_avx2,
                           detail::sumsq_avx2, detail::sq_dist_avx2};
#endif

bool avx2_available() {
#if defined(__x86_64__)
    return detail::avx2_supported();
#else
    return false;
#endif
}

struct Dispatch {
    Backend backend;
    Table table;
};

Dispatch resolve_initial() {
    const char* env = std::getenv("IDFORGE_KERNELS");
    std::string req = env ? env : "auto";
    if (req == "scalar") return {Backend::Scalar, kScalarTable};
#if defined(__x86_64__)
    if (req == "avx2") {
        if (!avx2_available()) throw ArgumentError("IDFORGE_KERNELS=avx2 but CPU lacks AVX2/FMA");
        return {Backend::Avx2, kAvx2Table};
    }
    if (req == "auto" && avx2_available()) return {Backend::Avx2, kAvx2Table};
#else
    if (req == "avx2") throw ArgumentError("IDFORGE_KERNELS=avx2 unsupported on this architecture");
#endif
    if (req != "auto" && req != "scalar") {
        throw ArgumentError("unknown IDFORGE_KERNELS value: " + req);
    }
    return {Backend::Scalar, kScalarTable};
}

Dispatch& dispatch() {
    static Dispatch d = resolve_initial();
    return d;
}

} // namespace

Backend active_backend() { return dispatch().backend; }

std::string_view backend_name() {
    switch (dispatch().backend) {
        case Backend::Avx2: return "avx2";
        case Backend::Scalar: break;
    }
    return "scalar";
}

void force_backend(Backend b) {
    if (b == Backend::Avx2) {
#if defined(__x86_64__)
        if (!avx2_available()) throw ArgumentError("AVX2/FMA not supported on this CPU");
        dispatch() = {Backend::Avx2, kAvx2Table};
        return;
#else
        throw ArgumentError("AVX2 backend unavailable on this architecture");
#endif
    }
    dispatch() = {Backend::Scalar, kScalarTable};
}

double dot(const double* a, const double* b, std::size_t n) { return dispatch().table.dot(a, b, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    dispatch().table.axpy(alpha, x, y, n);
}

void scal(double alpha, double* x, std::size_t n) { dispatch().table.scal(alpha, x, n); }

double sumsq(const double* x, std::size_t n) { return dispatch().table.sumsq(x, n); }

double sq_dist(const double* a, const double* b, std::size_t n) {
    return dispatch().table.sq_dist(a, b, n);
}

void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
    const auto dot_fn = dispatch().table.dot;
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_fn(w + r * cols, x, cols);
}

void matvec_t(const double* w, std::size_t rows, std::size_t cols, const double* g, double* out) {
    const auto axpy_fn = dispatch().table.axpy;
    for (std::size_t c = 0; c < cols; ++c) out[c] = 0.0;
    for (std::size_t r = 0; r < rows; ++r) axpy_fn(g[r], w + r * cols, out, cols);
}

void ger(double alpha, const double* g, std::size_t rows, const double* x, std::size_t cols,
         double* w) {
    const auto axpy_fn = dispatch().table.axpy;
    for (std::size_t r = 0; r < rows; ++r) axpy_fn(alpha * g[r], x, w + r * cols, cols);
}

} // namespace idforge::kern
