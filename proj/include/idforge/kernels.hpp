#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision kernels behind the whole numerics stack.
//
// Every primitive has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active variant is chosen once per process: AVX2 when
// the CPU supports it, scalar otherwise. `IDFORGE_KERNELS=scalar|avx2|auto`
// in the environment (or force_backend) overrides the choice; the dispatch is
// fixed for the lifetime of the process so a run is reproducible end to end
// on a given machine.
//
// SIMD and scalar variants may differ in the last few ulps (different
// reduction order); the equivalence suite pins that gap.

namespace idforge::kern {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
std::string_view backend_name();

// Throws ArgumentError when the requested backend is unavailable on this CPU.
void force_backend(Backend b);

// sum_i a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

// x[i] *= alpha
void scal(double alpha, double* x, std::size_t n);

// sum_i x[i]^2
double sumsq(const double* x, std::size_t n);

// sum_i (a[i]-b[i])^2
double sq_dist(const double* a, const double* b, std::size_t n);

// Row-major mat-vec layered on the primitives above.
// y = W x            (W: rows x cols, x: cols, y: rows)
void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
// out = W^T g        (g: rows, out: cols)
void matvec_t(const double* w, std::size_t rows, std::size_t cols, const double* g, double* out);
// W += alpha * g x^T (rank-1 accumulate)
void ger(double alpha, const double* g, std::size_t rows, const double* x, std::size_t cols,
         double* w);

namespace detail {
// Raw variants, exposed for the scalar-vs-SIMD equivalence tests.
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void scal_scalar(double alpha, double* x, std::size_t n);
double sumsq_scalar(const double* x, std::size_t n);
double sq_dist_scalar(const double* a, const double* b, std::size_t n);

#if defined(__x86_64__)
bool avx2_supported();
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void scal_avx2(double alpha, double* x, std::size_t n);
double sumsq_avx2(const double* x, std::size_t n);
double sq_dist_avx2(const double* a, const double* b, std::size_t n);
#endif
} // namespace detail

} // namespace idforge::kern
