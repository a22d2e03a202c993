// Backend selection. No intrinsics here; the table is picked once from CPU
// detection (overridable via DCKIT_SIMD or force_backend) and then stays
// fixed so a run's arithmetic is reproducible end to end.

#include "dckit/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "dckit/errors.hpp"

namespace dckit::kern {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
#if defined(__GNUC__) || defined(__clang__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
#else
    return false;
#endif
}

Backend detect_default() {
    if (const char* env = std::getenv("DCKIT_SIMD")) {
        const std::string v(env);
        if (v == "scalar") return Backend::scalar;
        if (v == "avx2" && backend_available(Backend::avx2)) return Backend::avx2;
        // "auto" or anything unusable falls through to detection
    }
    if (backend_available(Backend::avx2)) return Backend::avx2;
    return Backend::scalar;
}

std::atomic<const Ops*> g_active{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const Ops* table_for(Backend b) {
    switch (b) {
        case Backend::scalar:
            return &scalar_ops;
        case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            return &avx2_ops;
#else
            return nullptr;
#endif
    }
    return nullptr;
}

void ensure_initialized() {
    if (g_active.load(std::memory_order_acquire) != nullptr) return;
    const Backend b = detect_default();
    g_backend.store(b, std::memory_order_relaxed);
    g_active.store(table_for(b), std::memory_order_release);
}

} // namespace

const Ops& active() {
    ensure_initialized();
    return *g_active.load(std::memory_order_acquire);
}

Backend active_backend() {
    ensure_initialized();
    return g_backend.load(std::memory_order_relaxed);
}

bool backend_available(Backend b) {
    switch (b) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
            return table_for(Backend::avx2) != nullptr && cpu_has_avx2();
    }
    return false;
}

std::string_view backend_name(Backend b) {
    switch (b) {
        case Backend::scalar:
            return "scalar";
        case Backend::avx2:
            return "avx2";
    }
    return "unknown";
}

void force_backend(Backend b) {
    if (!backend_available(b))
        throw ValidationError("kernel backend unavailable on this host: " +
                              std::string(backend_name(b)));
    g_backend.store(b, std::memory_order_relaxed);
    g_active.store(table_for(b), std::memory_order_release);
}

void reset_backend() {
    const Backend b = detect_default();
    g_backend.store(b, std::memory_order_relaxed);
    g_active.store(table_for(b), std::memory_order_release);
}

} // namespace dckit::kern
