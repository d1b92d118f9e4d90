// NEON variants of the f64 kernel table (aarch64 only; NEON is baseline
// there, so no runtime feature check is needed beyond the architecture).

#include "dalm/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace dalm::kernels {

namespace {

double n_dot(const double * a, const double * b, size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    size_t      i    = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return vaddvq_f64(acc0) + vaddvq_f64(acc1) + tail;
}

void n_axpy(double alpha, const double * x, double * y, size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    size_t            i  = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void n_add(const double * x, double * y, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += x[i];
}

void n_mul(const double * x, double * y, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] *= x[i];
}

void n_scale(double alpha, double * y, size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    size_t            i  = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(va, vld1q_f64(y + i)));
    for (; i < n; ++i) y[i] *= alpha;
}

double n_sum(const double * x, size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    size_t      i   = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double tail = 0.0;
    for (; i < n; ++i) tail += x[i];
    return vaddvq_f64(acc) + tail;
}

double n_sq_sum(const double * x, size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    size_t      i   = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(x + i);
        acc           = vfmaq_f64(acc, v, v);
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += x[i] * x[i];
    return vaddvq_f64(acc) + tail;
}

double n_max(const double * x, size_t n) {
    size_t i = 0;
    double m;
    if (n >= 2) {
        float64x2_t vm = vld1q_f64(x);
        for (i = 2; i + 2 <= n; i += 2) vm = vmaxq_f64(vm, vld1q_f64(x + i));
        m = vmaxvq_f64(vm);
    } else {
        m = x[0];
        i = 1;
    }
    for (; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

void n_matmul_nn(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double * ai = a + i * k;
        double *       ci = c + i * n;
        size_t         j  = 0;
        for (; j + 8 <= n; j += 8) {
            float64x2_t c0 = vld1q_f64(ci + j);
            float64x2_t c1 = vld1q_f64(ci + j + 2);
            float64x2_t c2 = vld1q_f64(ci + j + 4);
            float64x2_t c3 = vld1q_f64(ci + j + 6);
            for (size_t kk = 0; kk < k; ++kk) {
                const float64x2_t va = vdupq_n_f64(ai[kk]);
                const double *    bk = b + kk * n + j;
                c0 = vfmaq_f64(c0, va, vld1q_f64(bk));
                c1 = vfmaq_f64(c1, va, vld1q_f64(bk + 2));
                c2 = vfmaq_f64(c2, va, vld1q_f64(bk + 4));
                c3 = vfmaq_f64(c3, va, vld1q_f64(bk + 6));
            }
            vst1q_f64(ci + j, c0);
            vst1q_f64(ci + j + 2, c1);
            vst1q_f64(ci + j + 4, c2);
            vst1q_f64(ci + j + 6, c3);
        }
        for (; j < n; ++j) {
            double acc = ci[j];
            for (size_t kk = 0; kk < k; ++kk) acc += ai[kk] * b[kk * n + j];
            ci[j] = acc;
        }
    }
}

void n_matmul_nt(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double * ai = a + i * k;
        double *       ci = c + i * n;
        for (size_t j = 0; j < n; ++j) ci[j] += n_dot(ai, b + j * k, k);
    }
}

void n_matmul_tn(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double * ai = a + i * k;
        const double * bi = b + i * n;
        for (size_t kk = 0; kk < k; ++kk) n_axpy(ai[kk], bi, c + kk * n, n);
    }
}

} // namespace

const Table neon_table = {
    "neon", n_dot,    n_axpy, n_add,       n_mul,       n_scale,
    n_sum,  n_sq_sum, n_max,  n_matmul_nn, n_matmul_nt, n_matmul_tn,
};

} // namespace dalm::kernels

#endif // aarch64
