#include "dalm/tensor.hpp"

#include "dalm/errors.hpp"
#include "dalm/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace dalm::ad {

namespace {
const kernels::Table & K() {
    return kernels::active();
}

void check(bool cond, const char * msg) {
    if (!cond) throw ContractError(msg);
}
} // namespace

TPtr randn(Rng & rng, int64_t r, int64_t c, double stddev, bool grad) {
    TPtr t = make_tensor(r, c, grad);
    for (double & x : t->v) x = stddev * rng.normal();
    return t;
}

TPtr full(int64_t r, int64_t c, double value, bool grad) {
    TPtr t = make_tensor(r, c, grad);
    std::fill(t->v.begin(), t->v.end(), value);
    return t;
}

TPtr Tape::matmul(const TPtr & a, const TPtr & b) {
    check(a->cols == b->rows, "matmul: inner dimensions differ");
    TPtr out = make_tensor(a->rows, b->cols, grad_ && (a->needs_grad || b->needs_grad));
    K().matmul_nn(a->v.data(), b->v.data(), out->v.data(),
                  size_t(a->rows), size_t(a->cols), size_t(b->cols));
    if (track(out)) {
        record(out, [a, b, out] {
            const size_t m = size_t(a->rows), k = size_t(a->cols), n = size_t(b->cols);
            if (a->needs_grad) {
                a->ensure_grad();
                // dA += dC * B^T
                K().matmul_nt(out->g.data(), b->v.data(), a->g.data(), m, n, k);
            }
            if (b->needs_grad) {
                b->ensure_grad();
                // dB += A^T * dC
                K().matmul_tn(a->v.data(), out->g.data(), b->g.data(), m, k, n);
            }
        });
    }
    return out;
}

TPtr Tape::matmul_nt(const TPtr & a, const TPtr & b) {
    check(a->cols == b->cols, "matmul_nt: contraction dimensions differ");
    TPtr out = make_tensor(a->rows, b->rows, grad_ && (a->needs_grad || b->needs_grad));
    K().matmul_nt(a->v.data(), b->v.data(), out->v.data(),
                  size_t(a->rows), size_t(a->cols), size_t(b->rows));
    if (track(out)) {
        record(out, [a, b, out] {
            const size_t m = size_t(a->rows), k = size_t(a->cols), n = size_t(b->rows);
            if (a->needs_grad) {
                a->ensure_grad();
                // dA += dC * B   ([m,n]x[n,k])
                K().matmul_nn(out->g.data(), b->v.data(), a->g.data(), m, n, k);
            }
            if (b->needs_grad) {
                b->ensure_grad();
                // dB += dC^T * A ([n,m]x[m,k])
                K().matmul_tn(out->g.data(), a->v.data(), b->g.data(), m, n, k);
            }
        });
    }
    return out;
}

TPtr Tape::add(const TPtr & a, const TPtr & b) {
    check(a->rows == b->rows && a->cols == b->cols, "add: shape mismatch");
    TPtr out = make_tensor(a->rows, a->cols, grad_ && (a->needs_grad || b->needs_grad));
    out->v   = a->v;
    K().add(b->v.data(), out->v.data(), out->v.size());
    if (track(out)) {
        record(out, [a, b, out] {
            if (a->needs_grad) {
                a->ensure_grad();
                K().add(out->g.data(), a->g.data(), a->g.size());
            }
            if (b->needs_grad) {
                b->ensure_grad();
                K().add(out->g.data(), b->g.data(), b->g.size());
            }
        });
    }
    return out;
}

TPtr Tape::add_rowvec(const TPtr & a, const TPtr & b) {
    check(b->rows == 1 && b->cols == a->cols, "add_rowvec: bias shape mismatch");
    TPtr out = make_tensor(a->rows, a->cols, grad_ && (a->needs_grad || b->needs_grad));
    out->v   = a->v;
    for (int64_t i = 0; i < a->rows; ++i) K().add(b->v.data(), out->row(i), size_t(a->cols));
    if (track(out)) {
        record(out, [a, b, out] {
            if (a->needs_grad) {
                a->ensure_grad();
                K().add(out->g.data(), a->g.data(), a->g.size());
            }
            if (b->needs_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < out->rows; ++i)
                    K().add(out->g.data() + size_t(i) * out->cols, b->g.data(), size_t(out->cols));
            }
        });
    }
    return out;
}

TPtr Tape::mul(const TPtr & a, const TPtr & b) {
    check(a->rows == b->rows && a->cols == b->cols, "mul: shape mismatch");
    TPtr out = make_tensor(a->rows, a->cols, grad_ && (a->needs_grad || b->needs_grad));
    out->v   = a->v;
    K().mul(b->v.data(), out->v.data(), out->v.size());
    if (track(out)) {
        record(out, [a, b, out] {
            const size_t n = out->v.size();
            if (a->needs_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < n; ++i) a->g[i] += out->g[i] * b->v[i];
            }
            if (b->needs_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < n; ++i) b->g[i] += out->g[i] * a->v[i];
            }
        });
    }
    return out;
}

TPtr Tape::scale(const TPtr & a, double alpha) {
    TPtr out = make_tensor(a->rows, a->cols, grad_ && a->needs_grad);
    out->v   = a->v;
    K().scale(alpha, out->v.data(), out->v.size());
    if (track(out)) {
        record(out, [a, out, alpha] {
            a->ensure_grad();
            K().axpy(alpha, out->g.data(), a->g.data(), a->g.size());
        });
    }
    return out;
}

TPtr Tape::slice_rows(const TPtr & a, int64_t r0, int64_t r1) {
    check(0 <= r0 && r0 <= r1 && r1 <= a->rows, "slice_rows: range out of bounds");
    TPtr out = make_tensor(r1 - r0, a->cols, grad_ && a->needs_grad);
    std::copy(a->row(r0), a->row(r0) + out->v.size(), out->v.begin());
    if (track(out)) {
        record(out, [a, out, r0] {
            a->ensure_grad();
            K().add(out->g.data(), a->g.data() + size_t(r0) * a->cols, out->g.size());
        });
    }
    return out;
}

TPtr Tape::concat_rows(const std::vector<TPtr> & parts) {
    check(!parts.empty(), "concat_rows: no parts");
    int64_t rows = 0;
    bool    grad = false;
    for (const TPtr & p : parts) {
        check(p->cols == parts[0]->cols, "concat_rows: column mismatch");
        rows += p->rows;
        grad = grad || p->needs_grad;
    }
    TPtr    out = make_tensor(rows, parts[0]->cols, grad_ && grad);
    int64_t r   = 0;
    for (const TPtr & p : parts) {
        std::copy(p->v.begin(), p->v.end(), out->row(r));
        r += p->rows;
    }
    if (track(out)) {
        record(out, [parts, out] {
            int64_t r = 0;
            for (const TPtr & p : parts) {
                if (p->needs_grad) {
                    p->ensure_grad();
                    K().add(out->g.data() + size_t(r) * out->cols, p->g.data(), p->g.size());
                }
                r += p->rows;
            }
        });
    }
    return out;
}

TPtr Tape::slice_cols(const TPtr & a, int64_t c0, int64_t c1) {
    check(0 <= c0 && c0 <= c1 && c1 <= a->cols, "slice_cols: range out of bounds");
    TPtr out = make_tensor(a->rows, c1 - c0, grad_ && a->needs_grad);
    for (int64_t i = 0; i < a->rows; ++i)
        std::copy(a->row(i) + c0, a->row(i) + c1, out->row(i));
    if (track(out)) {
        record(out, [a, out, c0] {
            a->ensure_grad();
            for (int64_t i = 0; i < out->rows; ++i)
                K().add(out->grad_row(i), a->grad_row(i) + c0, size_t(out->cols));
        });
    }
    return out;
}

TPtr Tape::concat_cols(const std::vector<TPtr> & parts) {
    check(!parts.empty(), "concat_cols: no parts");
    int64_t cols = 0;
    bool    grad = false;
    for (const TPtr & p : parts) {
        check(p->rows == parts[0]->rows, "concat_cols: row mismatch");
        cols += p->cols;
        grad = grad || p->needs_grad;
    }
    TPtr    out = make_tensor(parts[0]->rows, cols, grad_ && grad);
    int64_t c   = 0;
    for (const TPtr & p : parts) {
        for (int64_t i = 0; i < p->rows; ++i)
            std::copy(p->row(i), p->row(i) + p->cols, out->row(i) + c);
        c += p->cols;
    }
    if (track(out)) {
        record(out, [parts, out] {
            int64_t c = 0;
            for (const TPtr & p : parts) {
                if (p->needs_grad) {
                    p->ensure_grad();
                    for (int64_t i = 0; i < p->rows; ++i)
                        K().add(out->grad_row(i) + c, p->grad_row(i), size_t(p->cols));
                }
                c += p->cols;
            }
        });
    }
    return out;
}

TPtr Tape::rmsnorm(const TPtr & a, const TPtr & weight, double eps) {
    check(weight->rows == 1 && weight->cols == a->cols, "rmsnorm: weight shape mismatch");
    const int64_t n   = a->cols;
    TPtr          out = make_tensor(a->rows, n, grad_ && (a->needs_grad || weight->needs_grad));
    // keep 1/rms per row for the backward pass
    auto inv_rms = std::make_shared<std::vector<double>>(size_t(a->rows));
    for (int64_t i = 0; i < a->rows; ++i) {
        const double * x = a->row(i);
        double         r = 1.0 / std::sqrt(K().sq_sum(x, size_t(n)) / double(n) + eps);
        (*inv_rms)[i]    = r;
        double * y       = out->row(i);
        for (int64_t j = 0; j < n; ++j) y[j] = x[j] * r * weight->v[j];
    }
    if (track(out)) {
        record(out, [a, weight, out, inv_rms, n] {
            for (int64_t i = 0; i < a->rows; ++i) {
                const double * x  = a->row(i);
                const double * dy = out->grad_row(i);
                const double   r  = (*inv_rms)[i];
                if (weight->needs_grad) {
                    weight->ensure_grad();
                    for (int64_t j = 0; j < n; ++j) weight->g[j] += dy[j] * x[j] * r;
                }
                if (a->needs_grad) {
                    a->ensure_grad();
                    double dot = 0.0;
                    for (int64_t j = 0; j < n; ++j) dot += dy[j] * weight->v[j] * x[j];
                    const double c  = dot * r * r * r / double(n);
                    double *     dx = a->grad_row(i);
                    for (int64_t j = 0; j < n; ++j) dx[j] += dy[j] * weight->v[j] * r - x[j] * c;
                }
            }
        });
    }
    return out;
}

TPtr Tape::silu(const TPtr & a) {
    TPtr out = make_tensor(a->rows, a->cols, grad_ && a->needs_grad);
    for (size_t i = 0; i < a->v.size(); ++i) {
        const double x = a->v[i];
        out->v[i]      = x / (1.0 + std::exp(-x));
    }
    if (track(out)) {
        record(out, [a, out] {
            a->ensure_grad();
            for (size_t i = 0; i < a->v.size(); ++i) {
                const double x = a->v[i];
                const double s = 1.0 / (1.0 + std::exp(-x));
                a->g[i] += out->g[i] * s * (1.0 + x * (1.0 - s));
            }
        });
    }
    return out;
}

TPtr Tape::gelu(const TPtr & a) {
    static constexpr double kInvSqrt2   = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    TPtr out = make_tensor(a->rows, a->cols, grad_ && a->needs_grad);
    for (size_t i = 0; i < a->v.size(); ++i) {
        const double x = a->v[i];
        out->v[i]      = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    if (track(out)) {
        record(out, [a, out] {
            a->ensure_grad();
            for (size_t i = 0; i < a->v.size(); ++i) {
                const double x   = a->v[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                a->g[i] += out->g[i] * (cdf + x * pdf);
            }
        });
    }
    return out;
}

TPtr Tape::softmax_rows(const TPtr & a) {
    const int64_t n   = a->cols;
    TPtr          out = make_tensor(a->rows, n, grad_ && a->needs_grad);
    for (int64_t i = 0; i < a->rows; ++i) {
        const double * x = a->row(i);
        double *       y = out->row(i);
        const double   m = K().max(x, size_t(n));
        double         z = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - m);
            z += y[j];
        }
        K().scale(1.0 / z, y, size_t(n));
    }
    if (track(out)) {
        record(out, [a, out, n] {
            a->ensure_grad();
            for (int64_t i = 0; i < a->rows; ++i) {
                const double * y   = out->row(i);
                const double * dy  = out->grad_row(i);
                const double   dot = K().dot(dy, y, size_t(n));
                double *       dx  = a->grad_row(i);
                for (int64_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
            }
        });
    }
    return out;
}

namespace {
// rotation angles for one row: theta_p(j) = pos * base^(-2j/d)
void rope_apply(const double * x, double * y, int64_t d, double pos, double base, bool inverse) {
    for (int64_t j = 0; j + 1 < d; j += 2) {
        const double theta = pos * std::pow(base, -double(j) / double(d));
        const double c     = std::cos(theta);
        const double s     = inverse ? -std::sin(theta) : std::sin(theta);
        const double x0    = x[j];
        const double x1    = x[j + 1];
        y[j]               = x0 * c - x1 * s;
        y[j + 1]           = x0 * s + x1 * c;
    }
    if (d % 2 != 0) y[d - 1] = x[d - 1]; // odd tail passes through
}
} // namespace

TPtr Tape::rope(const TPtr & a, const std::vector<int32_t> & positions, double base) {
    check(int64_t(positions.size()) == a->rows, "rope: positions size mismatch");
    TPtr out = make_tensor(a->rows, a->cols, grad_ && a->needs_grad);
    for (int64_t i = 0; i < a->rows; ++i)
        rope_apply(a->row(i), out->row(i), a->cols, double(positions[i]), base, false);
    if (track(out)) {
        auto pos = positions;
        record(out, [a, out, pos, base] {
            a->ensure_grad();
            std::vector<double> tmp(size_t(a->cols));
            for (int64_t i = 0; i < a->rows; ++i) {
                // rotation is orthogonal: d x = R(-theta) d y
                rope_apply(out->grad_row(i), tmp.data(), a->cols, double(pos[i]), base, true);
                K().add(tmp.data(), a->grad_row(i), tmp.size());
            }
        });
    }
    return out;
}

TPtr Tape::embed(const TPtr & table, const std::vector<int32_t> & ids) {
    const int64_t h   = table->cols;
    TPtr          out = make_tensor(int64_t(ids.size()), h, grad_ && table->needs_grad);
    for (size_t i = 0; i < ids.size(); ++i) {
        check(ids[i] >= 0 && ids[i] < table->rows, "embed: id out of vocabulary");
        std::copy(table->row(ids[i]), table->row(ids[i]) + h, out->row(int64_t(i)));
    }
    if (track(out)) {
        auto idx = ids;
        record(out, [table, out, idx] {
            table->ensure_grad();
            for (size_t i = 0; i < idx.size(); ++i)
                K().add(out->grad_row(int64_t(i)), table->grad_row(idx[i]), size_t(table->cols));
        });
    }
    return out;
}

TPtr Tape::conv1d(const TPtr & x, const TPtr & weight, const TPtr & bias,
                  int kernel, int stride) {
    const int64_t t_in  = x->rows;
    const int64_t c_in  = x->cols;
    const int64_t c_out = weight->rows;
    check(weight->cols == int64_t(kernel) * c_in, "conv1d: weight shape mismatch");
    check(bias->rows == 1 && bias->cols == c_out, "conv1d: bias shape mismatch");
    check(stride >= 1 && kernel >= 1, "conv1d: bad kernel/stride");

    const int64_t t_out    = (t_in + stride - 1) / stride; // ceil
    const int64_t pad_tot  = std::max<int64_t>(0, (t_out - 1) * stride + kernel - t_in);
    const int64_t pad_left = pad_tot / 2;
    const size_t  patch    = size_t(kernel) * size_t(c_in);

    TPtr out = make_tensor(t_out, c_out,
                           grad_ && (x->needs_grad || weight->needs_grad || bias->needs_grad));
    std::vector<double> scratch(patch);
    for (int64_t t = 0; t < t_out; ++t) {
        const int64_t  r0 = t * stride - pad_left;
        const double * p  = nullptr;
        if (r0 >= 0 && r0 + kernel <= t_in) {
            p = x->row(r0); // contiguous block, no copy
        } else {
            std::fill(scratch.begin(), scratch.end(), 0.0);
            for (int64_t kk = 0; kk < kernel; ++kk) {
                const int64_t r = r0 + kk;
                if (r >= 0 && r < t_in)
                    std::copy(x->row(r), x->row(r) + c_in, scratch.data() + size_t(kk) * c_in);
            }
            p = scratch.data();
        }
        double * y = out->row(t);
        for (int64_t o = 0; o < c_out; ++o)
            y[o] = bias->v[o] + K().dot(weight->row(o), p, patch);
    }
    if (track(out)) {
        record(out, [x, weight, bias, out, kernel, stride, pad_left, t_in, c_in, c_out, patch] {
            std::vector<double> pbuf(patch);
            std::vector<double> gbuf(patch);
            if (x->needs_grad) x->ensure_grad();
            if (weight->needs_grad) weight->ensure_grad();
            if (bias->needs_grad) bias->ensure_grad();
            for (int64_t t = 0; t < out->rows; ++t) {
                const int64_t  r0     = t * stride - pad_left;
                const bool     inside = r0 >= 0 && r0 + kernel <= t_in;
                const double * dy     = out->grad_row(t);
                const double * p      = nullptr;
                if (weight->needs_grad) {
                    if (inside) {
                        p = x->row(r0);
                    } else {
                        std::fill(pbuf.begin(), pbuf.end(), 0.0);
                        for (int64_t kk = 0; kk < kernel; ++kk) {
                            const int64_t r = r0 + kk;
                            if (r >= 0 && r < t_in)
                                std::copy(x->row(r), x->row(r) + c_in,
                                          pbuf.data() + size_t(kk) * c_in);
                        }
                        p = pbuf.data();
                    }
                }
                for (int64_t o = 0; o < c_out; ++o) {
                    const double d = dy[o];
                    if (d == 0.0) continue;
                    if (bias->needs_grad) bias->g[o] += d;
                    if (weight->needs_grad) K().axpy(d, p, weight->grad_row(o), patch);
                }
                if (x->needs_grad) {
                    std::fill(gbuf.begin(), gbuf.end(), 0.0);
                    for (int64_t o = 0; o < c_out; ++o) {
                        const double d = dy[o];
                        if (d != 0.0) K().axpy(d, weight->row(o), gbuf.data(), patch);
                    }
                    if (inside) {
                        K().add(gbuf.data(), x->grad_row(r0), patch);
                    } else {
                        for (int64_t kk = 0; kk < kernel; ++kk) {
                            const int64_t r = r0 + kk;
                            if (r >= 0 && r < t_in)
                                K().add(gbuf.data() + size_t(kk) * c_in, x->grad_row(r),
                                        size_t(c_in));
                        }
                    }
                }
            }
        });
    }
    return out;
}

TPtr Tape::masked_nll(const TPtr & logits, const std::vector<int32_t> & targets,
                      const std::vector<uint8_t> & mask, double weight) {
    check(int64_t(targets.size()) == logits->rows, "masked_nll: target size mismatch");
    check(mask.size() == targets.size(), "masked_nll: mask size mismatch");
    const int64_t n   = logits->cols;
    TPtr          out = make_tensor(1, 1, grad_ && logits->needs_grad);
    double        total = 0.0;
    for (int64_t i = 0; i < logits->rows; ++i) {
        if (!mask[size_t(i)]) continue;
        const double * x = logits->row(i);
        const double   m = K().max(x, size_t(n));
        double         z = 0.0;
        for (int64_t j = 0; j < n; ++j) z += std::exp(x[j] - m);
        total += m + std::log(z) - x[targets[size_t(i)]];
    }
    out->v[0] = weight * total;
    if (track(out)) {
        auto tgt = targets;
        auto msk = mask;
        record(out, [logits, out, tgt, msk, weight, n] {
            logits->ensure_grad();
            const double go = out->g[0] * weight;
            for (int64_t i = 0; i < logits->rows; ++i) {
                if (!msk[size_t(i)]) continue;
                const double * x = logits->row(i);
                const double   m = K().max(x, size_t(n));
                double         z = 0.0;
                for (int64_t j = 0; j < n; ++j) z += std::exp(x[j] - m);
                double * dx = logits->grad_row(i);
                for (int64_t j = 0; j < n; ++j) dx[j] += go * std::exp(x[j] - m) / z;
                dx[tgt[size_t(i)]] -= go;
            }
        });
    }
    return out;
}

TPtr Tape::mean_scalars(const std::vector<TPtr> & scalars) {
    check(!scalars.empty(), "mean_scalars: empty");
    bool grad = false;
    for (const TPtr & s : scalars) {
        check(s->rows == 1 && s->cols == 1, "mean_scalars: non-scalar input");
        grad = grad || s->needs_grad;
    }
    TPtr out = make_tensor(1, 1, grad_ && grad);
    for (const TPtr & s : scalars) out->v[0] += s->v[0];
    out->v[0] /= double(scalars.size());
    if (track(out)) {
        record(out, [scalars, out] {
            const double go = out->g[0] / double(scalars.size());
            for (const TPtr & s : scalars) {
                if (s->needs_grad) {
                    s->ensure_grad();
                    s->g[0] += go;
                }
            }
        });
    }
    return out;
}

void Tape::backward(const TPtr & loss) {
    check(loss->rows == 1 && loss->cols == 1, "backward: loss must be a scalar");
    check(grad_, "backward: tape was constructed without gradients");
    loss->ensure_grad();
    loss->g[0] = 1.0;
    for (auto it = back_.rbegin(); it != back_.rend(); ++it) (*it)();
    back_.clear();
}

} // namespace dalm::ad
