// Scalar reference kernels. These define the semantics the SIMD variants are
// equivalence-tested against; keep them simple, f64 accumulation throughout.

#include "dckit/kernels.hpp"

namespace dckit::kern {
namespace {

double dot_f32(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double dot_f32f64(const float* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

double l2sq_f32(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

double sum_f64(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double centered_sumsq_f64(const double* a, double mean, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - mean;
        acc += d * d;
    }
    return acc;
}

void axpby_f64(double a, const double* x, double b, const double* y, double* out,
               std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

} // namespace

const Ops scalar_ops = {
    "scalar", dot_f32, dot_f64, dot_f32f64, l2sq_f32, sum_f64, centered_sumsq_f64, axpby_f64,
};

} // namespace dckit::kern
