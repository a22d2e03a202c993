#pragma once

#include <cstddef>
#include <string_view>

namespace dckit::kern {

// Function table for the data-parallel inner loops. Reductions over f32
// inputs accumulate in f64 regardless of backend. Each backend is
// deterministic for a given input; backends may differ from each other by
// reduction-order rounding only, which the equivalence tests bound.
struct Ops {
    const char* name;
    double (*dot_f32)(const float* a, const float* b, std::size_t n);
    double (*dot_f64)(const double* a, const double* b, std::size_t n);
    double (*dot_f32f64)(const float* a, const double* b, std::size_t n);
    double (*l2sq_f32)(const float* a, const float* b, std::size_t n);
    double (*sum_f64)(const double* a, std::size_t n);
    double (*centered_sumsq_f64)(const double* a, double mean, std::size_t n);
    // out[i] = a*x[i] + b*y[i]; out may alias x or y.
    void (*axpby_f64)(double a, const double* x, double b, const double* y, double* out,
                      std::size_t n);
};

enum class Backend { scalar, avx2 };

// Active table. Defaults to the best backend the CPU supports, or to the
// backend named in DCKIT_SIMD ("scalar", "avx2", "auto").
const Ops& active();
Backend active_backend();
bool backend_available(Backend b);
std::string_view backend_name(Backend b);

// Force a specific backend (throws dckit::ValidationError if unavailable).
// Used by the scalar/SIMD equivalence tests.
void force_backend(Backend b);
void reset_backend();

extern const Ops scalar_ops;
#if defined(__x86_64__) || defined(_M_X64)
extern const Ops avx2_ops;
#endif

} // namespace dckit::kern
