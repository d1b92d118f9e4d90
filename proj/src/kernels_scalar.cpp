// Scalar reference kernels. These define the semantics; the SIMD variants
// must agree with them up to floating-point reassociation.

#include "dalm/kernels.hpp"

namespace dalm::kernels {

namespace {

double s_dot(const double * a, const double * b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void s_axpy(double alpha, const double * x, double * y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void s_add(const double * x, double * y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += x[i];
}

void s_mul(const double * x, double * y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] *= x[i];
}

void s_scale(double alpha, double * y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] *= alpha;
}

double s_sum(const double * x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double s_sq_sum(const double * x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

double s_max(const double * x, size_t n) {
    double m = x[0];
    for (size_t i = 1; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

void s_matmul_nn(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        double * ci = c + i * n;
        for (size_t kk = 0; kk < k; ++kk) {
            const double   aik = a[i * k + kk];
            const double * bk  = b + kk * n;
            for (size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

void s_matmul_nt(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double * ai = a + i * k;
        for (size_t j = 0; j < n; ++j) {
            c[i * n + j] += s_dot(ai, b + j * k, k);
        }
    }
}

void s_matmul_tn(const double * a, const double * b, double * c,
                 size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double * bi = b + i * n;
        for (size_t kk = 0; kk < k; ++kk) {
            const double aik = a[i * k + kk];
            double *     ck  = c + kk * n;
            for (size_t j = 0; j < n; ++j) ck[j] += aik * bi[j];
        }
    }
}

} // namespace

const Table scalar_table = {
    "scalar", s_dot,    s_axpy,      s_add,       s_mul,       s_scale,
    s_sum,    s_sq_sum, s_max,       s_matmul_nn, s_matmul_nt, s_matmul_tn,
};

} // namespace dalm::kernels
