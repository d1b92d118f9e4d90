#pragma once
// f64 compute kernels: scalar reference implementations plus SIMD variants
// (AVX2/FMA on x86-64, NEON on aarch64) selected at runtime. Every variant
// is equivalence-tested against the scalar reference.
//
// Matmul kernels ACCUMULATE into C (C += ...); callers zero C when they
// want a plain product. Shapes are row-major.

#include <cstddef>

namespace dalm::kernels {

enum class Backend { scalar = 0, avx2 = 1, neon = 2 };

struct Table {
    const char * name;

    double (*dot)(const double * a, const double * b, size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double * x, double * y, size_t n);
    // y += x
    void (*add)(const double * x, double * y, size_t n);
    // y *= x
    void (*mul)(const double * x, double * y, size_t n);
    // y *= alpha
    void (*scale)(double alpha, double * y, size_t n);
    double (*sum)(const double * x, size_t n);
    double (*sq_sum)(const double * x, size_t n);
    double (*max)(const double * x, size_t n);

    // C[m x n] += A[m x k] * B[k x n]
    void (*matmul_nn)(const double * a, const double * b, double * c,
                      size_t m, size_t k, size_t n);
    // C[m x n] += A[m x k] * B[n x k]^T
    void (*matmul_nt)(const double * a, const double * b, double * c,
                      size_t m, size_t k, size_t n);
    // C[k x n] += A[m x k]^T * B[m x n]
    void (*matmul_tn)(const double * a, const double * b, double * c,
                      size_t m, size_t k, size_t n);
};

extern const Table scalar_table;
#if defined(__x86_64__) || defined(_M_X64)
extern const Table avx2_table;
#endif
#if defined(__aarch64__)
extern const Table neon_table;
#endif

// Active table. Defaults to the best backend the CPU supports, or the one
// named by the DALM_KERNELS environment variable (scalar|avx2|neon|auto).
const Table & active();

// Force a backend; returns false (leaving the selection unchanged) when the
// backend is not available on this machine/build.
bool select(Backend b);
bool select_by_name(const char * name);

Backend      current();
const char * backend_name();

bool backend_available(Backend b);

} // namespace dalm::kernels
