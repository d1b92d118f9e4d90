// Runtime backend selection for the f64 kernel table.

#include "dalm/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace dalm::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect_best() {
#if defined(__aarch64__)
    return Backend::neon;
#else
    return cpu_has_avx2_fma() ? Backend::avx2 : Backend::scalar;
#endif
}

Backend from_env_or_best() {
    const char * env = std::getenv("DALM_KERNELS");
    if (env != nullptr && std::strcmp(env, "auto") != 0) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && backend_available(Backend::avx2)) return Backend::avx2;
        if (std::strcmp(env, "neon") == 0 && backend_available(Backend::neon)) return Backend::neon;
        // unknown or unavailable name: fall through to detection
    }
    return detect_best();
}

const Table * g_active  = nullptr;
Backend       g_backend = Backend::scalar;

const Table * table_for(Backend b) {
    switch (b) {
        case Backend::scalar:
            return &scalar_table;
#if defined(__x86_64__) || defined(_M_X64)
        case Backend::avx2:
            return &avx2_table;
#endif
#if defined(__aarch64__)
        case Backend::neon:
            return &neon_table;
#endif
        default:
            return nullptr;
    }
}

void ensure_init() {
    if (g_active == nullptr) {
        g_backend = from_env_or_best();
        g_active  = table_for(g_backend);
    }
}

} // namespace

bool backend_available(Backend b) {
    if (b == Backend::scalar) return true;
#if defined(__x86_64__) || defined(_M_X64)
    if (b == Backend::avx2) return cpu_has_avx2_fma();
#endif
#if defined(__aarch64__)
    if (b == Backend::neon) return true;
#endif
    return false;
}

const Table & active() {
    ensure_init();
    return *g_active;
}

bool select(Backend b) {
    if (!backend_available(b)) return false;
    const Table * t = table_for(b);
    if (t == nullptr) return false;
    g_backend = b;
    g_active  = t;
    return true;
}

bool select_by_name(const char * name) {
    if (name == nullptr) return false;
    if (std::strcmp(name, "scalar") == 0) return select(Backend::scalar);
    if (std::strcmp(name, "avx2") == 0) return select(Backend::avx2);
    if (std::strcmp(name, "neon") == 0) return select(Backend::neon);
    if (std::strcmp(name, "auto") == 0) {
        g_active = nullptr;
        ensure_init();
        return true;
    }
    return false;
}

Backend current() {
    ensure_init();
    return g_backend;
}

const char * backend_name() {
    return active().name;
}

} // namespace dalm::kernels
