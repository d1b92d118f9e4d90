#pragma once
// Minimal reverse-mode autodiff over row-major f64 matrices. Every tensor
// is 2-D (scalars are 1x1). Ops execute eagerly through the active kernel
// table and push backward closures onto a tape; Tape::backward runs them
// in reverse. A tape constructed with grad_enabled=false records nothing,
// which is the inference path.

#include "dalm/rng.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dalm::ad {

struct Tensor {
    int64_t             rows = 0;
    int64_t             cols = 0;
    std::vector<double> v;
    std::vector<double> g;
    bool                needs_grad = false;
    std::string         name;

    Tensor() = default;
    Tensor(int64_t r, int64_t c, bool grad = false)
        : rows(r), cols(c), v(size_t(r) * size_t(c), 0.0), needs_grad(grad) {}

    int64_t  numel() const { return rows * cols; }
    double & at(int64_t i, int64_t j) { return v[size_t(i) * cols + j]; }
    double   at(int64_t i, int64_t j) const { return v[size_t(i) * cols + j]; }
    double * row(int64_t i) { return v.data() + size_t(i) * cols; }
    const double * row(int64_t i) const { return v.data() + size_t(i) * cols; }

    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }
    void zero_grad() {
        if (!g.empty()) std::fill(g.begin(), g.end(), 0.0);
    }
    double * grad_row(int64_t i) { return g.data() + size_t(i) * cols; }
};

using TPtr = std::shared_ptr<Tensor>;

inline TPtr make_tensor(int64_t r, int64_t c, bool grad = false) {
    return std::make_shared<Tensor>(r, c, grad);
}

TPtr randn(Rng & rng, int64_t r, int64_t c, double stddev, bool grad = true);
TPtr full(int64_t r, int64_t c, double value, bool grad = false);

class Tape {
  public:
    explicit Tape(bool grad_enabled = true) : grad_(grad_enabled) {}

    // --- elementwise / linear algebra ---
    TPtr matmul(const TPtr & a, const TPtr & b);      // [m,k]x[k,n]
    TPtr matmul_nt(const TPtr & a, const TPtr & b);   // [m,k]x[n,k]^T
    TPtr add(const TPtr & a, const TPtr & b);         // same shape
    TPtr add_rowvec(const TPtr & a, const TPtr & b);  // b is [1,n]
    TPtr mul(const TPtr & a, const TPtr & b);
    TPtr scale(const TPtr & a, double alpha);

    // --- shape ---
    TPtr slice_rows(const TPtr & a, int64_t r0, int64_t r1);
    TPtr concat_rows(const std::vector<TPtr> & parts);
    TPtr slice_cols(const TPtr & a, int64_t c0, int64_t c1);
    TPtr concat_cols(const std::vector<TPtr> & parts);

    // --- nonlinearities / norms ---
    TPtr rmsnorm(const TPtr & a, const TPtr & weight, double eps);
    TPtr silu(const TPtr & a);
    TPtr gelu(const TPtr & a);
    TPtr softmax_rows(const TPtr & a);

    // Rotary position encoding over column pairs (2i, 2i+1).
    TPtr rope(const TPtr & a, const std::vector<int32_t> & positions, double base);

    // Row gather from an embedding table.
    TPtr embed(const TPtr & table, const std::vector<int32_t> & ids);

    // 1-D convolution over rows ("time"), channels in columns.
    // weight layout: [c_out x (kernel*c_in)], kernel-major blocks, so a
    // weight row matches a contiguous span of `kernel` input rows.
    // Output length is ceil(t_in/stride) (zero padding, centered).
    TPtr conv1d(const TPtr & x, const TPtr & weight, const TPtr & bias,
                int kernel, int stride);

    // Sum over masked rows of -log softmax(logits[i])[target[i]], times
    // `weight`. Rows with mask=false contribute nothing.
    TPtr masked_nll(const TPtr & logits, const std::vector<int32_t> & targets,
                    const std::vector<uint8_t> & mask, double weight);

    // Mean of 1x1 scalars.
    TPtr mean_scalars(const std::vector<TPtr> & scalars);

    void   backward(const TPtr & loss);
    size_t node_count() const { return back_.size(); }
    bool   grad_enabled() const { return grad_; }

  private:
    bool                               grad_;
    std::vector<std::function<void()>> back_;

    bool track(const TPtr & out) const { return grad_ && out->needs_grad; }

    // A node whose output never received gradient (dead branch) is skipped.
    void record(const TPtr & out, std::function<void()> f) {
        back_.push_back([out, fn = std::move(f)] {
            if (!out->g.empty()) fn();
        });
    }
};

} // namespace dalm::ad
