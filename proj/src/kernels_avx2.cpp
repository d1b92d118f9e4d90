// AVX2/FMA variants of the f64 kernel table. This file is compiled with
// -mavx2 -mfma; runtime dispatch in kernels.cpp keeps it off CPUs that
// lack the extensions.

#include "dalm/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace dalm::kernels {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo         = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double v_dot(const double * a, const double * b, size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    size_t  i    = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i] * b[i];
    acc0 = _mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3));
    return hsum(acc0) + tail;
}

void v_axpy(double alpha, const double * x, double * y, size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    size_t        i  = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        __m256d y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4));
        _mm256_storeu_pd(y + i, y0);
        _mm256_storeu_pd(y + i + 4, y1);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void v_add(const double * x, double * y, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) y[i] += x[i];
}

void v_mul(const double * x, double * y, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) y[i] *= x[i];
}

void v_scale(double alpha, double * y, size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    size_t        i  = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] *= alpha;
}

double v_sum(const double * x, size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    size_t  i    = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += x[i];
    return hsum(_mm256_add_pd(acc0, acc1)) + tail;
}

double v_sq_sum(const double * x, size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    size_t  i    = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d x0 = _mm256_loadu_pd(x + i);
        __m256d x1 = _mm256_loadu_pd(x + i + 4);
        acc0       = _mm256_fmadd_pd(x0, x0, acc0);
        acc1       = _mm256_fmadd_pd(x1, x1, acc1);
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += x[i] * x[i];
    return hsum(_mm256_add_pd(acc0, acc1)) + tail;
}

double v_max(const double * x, size_t n) {
    size_t i = 0;
    double m;
    if (n >= 4) {
        __m256d vm = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        __m128d lo = _mm256_castpd256_pd128(vm);
        __m128d hi = _mm256_extractf128_pd(vm, 1);
        lo         = _mm_max_pd(lo, hi);
        __m128d sh = _mm_unpackhi_pd(lo, lo);
        m          = _mm_cvtsd_f64(_mm_max_sd(lo, sh));
    } else {
        m = x[0];
        i = 1;
    }
    for (; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

// C row kept in registers across the k loop: 4 accumulators x 4 lanes.
void v_matmul_nn(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double * ai = a + i * k;
        double *       ci = c + i * n;
        size_t         j  = 0;
        for (; j + 16 <= n; j += 16) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            __m256d c1 = _mm256_loadu_pd(ci + j + 4);
            __m256d c2 = _mm256_loadu_pd(ci + j + 8);
            __m256d c3 = _mm256_loadu_pd(ci + j + 12);
            for (size_t kk = 0; kk < k; ++kk) {
                const __m256d  va = _mm256_set1_pd(ai[kk]);
                const double * bk = b + kk * n + j;
                c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(bk), c0);
                c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(bk + 4), c1);
                c2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(bk + 8), c2);
                c3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(bk + 12), c3);
            }
            _mm256_storeu_pd(ci + j, c0);
            _mm256_storeu_pd(ci + j + 4, c1);
            _mm256_storeu_pd(ci + j + 8, c2);
            _mm256_storeu_pd(ci + j + 12, c3);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            for (size_t kk = 0; kk < k; ++kk) {
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(ai[kk]), _mm256_loadu_pd(b + kk * n + j), c0);
            }
            _mm256_storeu_pd(ci + j, c0);
        }
        for (; j < n; ++j) {
            double acc = ci[j];
            for (size_t kk = 0; kk < k; ++kk) acc += ai[kk] * b[kk * n + j];
            ci[j] = acc;
        }
    }
}

void v_matmul_nt(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double * ai = a + i * k;
        double *       ci = c + i * n;
        for (size_t j = 0; j < n; ++j) ci[j] += v_dot(ai, b + j * k, k);
    }
}

void v_matmul_tn(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double * ai = a + i * k;
        const double * bi = b + i * n;
        for (size_t kk = 0; kk < k; ++kk) v_axpy(ai[kk], bi, c + kk * n, n);
    }
}

} // namespace

const Table avx2_table = {
    "avx2", v_dot,    v_axpy, v_add,       v_mul,       v_scale,
    v_sum,  v_sq_sum, v_max,  v_matmul_nn, v_matmul_nt, v_matmul_tn,
};

} // namespace dalm::kernels

#endif // x86_64
