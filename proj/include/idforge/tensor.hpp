#pragma once

#include "idforge/errors.hpp"
#include "idforge/kernels.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace idforge {

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

void check_finite(std::span<const double> values, const std::string& context);
void check_finite(const Mat& m, const std::string& context);
void check_dim(std::size_t got, std::size_t want, const std::string& context);

// y = W x, validating shapes.
Vec matvec(const Mat& w, const Vec& x);

double dot(const Vec& a, const Vec& b);
double norm(const Vec& v);
double sq_dist(const Vec& a, const Vec& b);

Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec scaled(const Vec& a, double alpha);
// a += alpha * b
void axpy_into(Vec& a, double alpha, const Vec& b);

// v / ||v||_2; DimensionError on empty input, NumericError when the norm is
// too small to normalize stably.
Vec normalized(const Vec& v);

Vec concat(std::span<const Vec> parts);

} // namespace idforge
