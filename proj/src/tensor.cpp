#include "idforge/tensor.hpp"

#include <cmath>

namespace idforge {

void check_finite(std::span<const double> values, const std::string& context) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError(context + ": non-finite value");
    }
}

void check_finite(const Mat& m, const std::string& context) {
    check_finite(std::span<const double>(m.data), context);
}

void check_dim(std::size_t got, std::size_t want, const std::string& context) {
    if (got != want) {
        throw DimensionError(context + ": dimension " + std::to_string(got) + " != " +
                             std::to_string(want));
    }
}

Vec matvec(const Mat& w, const Vec& x) {
    check_dim(x.size(), w.cols, "matvec");
    Vec y(w.rows);
    kern::matvec(w.data.data(), w.rows, w.cols, x.data(), y.data());
    return y;
}

double dot(const Vec& a, const Vec& b) {
    check_dim(a.size(), b.size(), "dot");
    return kern::dot(a.data(), b.data(), a.size());
}

double norm(const Vec& v) { return std::sqrt(kern::sumsq(v.data(), v.size())); }

double sq_dist(const Vec& a, const Vec& b) {
    check_dim(a.size(), b.size(), "sq_dist");
    return kern::sq_dist(a.data(), b.data(), a.size());
}

Vec add(const Vec& a, const Vec& b) {
    check_dim(a.size(), b.size(), "add");
    Vec out(a);
    kern::axpy(1.0, b.data(), out.data(), out.size());
    return out;
}

Vec sub(const Vec& a, const Vec& b) {
    check_dim(a.size(), b.size(), "sub");
    Vec out(a);
    kern::axpy(-1.0, b.data(), out.data(), out.size());
    return out;
}

Vec scaled(const Vec& a, double alpha) {
    Vec out(a);
    kern::scal(alpha, out.data(), out.size());
    return out;
}

void axpy_into(Vec& a, double alpha, const Vec& b) {
    check_dim(b.size(), a.size(), "axpy_into");
    kern::axpy(alpha, b.data(), a.data(), a.size());
}

Vec normalized(const Vec& v) {
    if (v.empty()) throw DimensionError("normalized: empty vector");
    const double n = norm(v);
    if (!(n > 1e-300)) throw NumericError("normalized: vector norm too small");
    return scaled(v, 1.0 / n);
}

Vec concat(std::span<const Vec> parts) {
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    Vec out;
    out.reserve(total);
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

} // namespace idforge
