#pragma once
// Forward masking process and the masked-prediction training loss. Response
// positions are independently replaced by the mask token with probability t;
// the loss reconstructs them, weighted 1/t. Audio-prefix and prompt positions
// are never masked.

#include <functional>
#include <vector>

#include "dalm/rng.hpp"
#include "dalm/tensor.hpp"
#include "dalm/text.hpp"

namespace dalm::diff {

struct DiffusionTime {
    double t;
    explicit DiffusionTime(double t_);
};

struct VocabSpec {
    int32_t size;
    int32_t mask_id;
    int32_t end_id;
    VocabSpec(int32_t size_, int32_t mask, int32_t end);
};

struct MaskedExample {
    text::TokenSequence  clean;
    text::TokenSequence  corrupted;
    std::vector<uint8_t> mask; // true => corrupted is MASK and role is response
    DiffusionTime        time;
};

// t uniform on [epsilon, 1]; epsilon bounds the 1/t loss weight.
DiffusionTime sample_time(Rng & rng, double epsilon);

MaskedExample forward_mask(const text::TokenSequence & clean, DiffusionTime time,
                           Rng & rng, int32_t mask_id);

// Differentiable loss for one example:
//   extra_scale * (1/t) * sum_i 1[mask_i] * (-log softmax(logits_i)[clean_i]).
// logits row i corresponds to sequence position row_offset + i; every masked
// position must fall inside that window. Zero masked positions yield 0.
ad::TPtr masked_loss(ad::Tape & tape, const ad::TPtr & logits, const MaskedExample & ex,
                     int64_t row_offset = 0, double extra_scale = 1.0);

// Counts masked positions where argmax(logits row) equals the clean token.
int64_t masked_argmax_hits(const ad::TPtr & logits, const MaskedExample & ex,
                           int64_t row_offset = 0);

// Plain logits produced by some predictor for a corrupted sequence: one row
// of vocabulary scores per sequence position.
using LogitsFn =
    std::function<std::vector<std::vector<double>>(const text::TokenSequence & corrupted)>;

// Loss value of one fixed mask pattern (no tape); shared by both estimators.
double pattern_loss(const LogitsFn & predict, const text::TokenSequence & clean,
                    const std::vector<uint8_t> & mask, double t, int32_t mask_id);

// Exact expectation of the masked loss over all 2^L' mask patterns, pattern
// with k masks weighted t^k (1-t)^(L'-k). Refuses L' > 12.
double loss_oracle(const LogitsFn & predict, const text::TokenSequence & clean,
                   DiffusionTime time, int32_t mask_id);

// Monte-Carlo estimate of the same expectation from n_draws mask draws.
double masked_loss_mc(const LogitsFn & predict, const text::TokenSequence & clean,
                      DiffusionTime time, int32_t mask_id, Rng & rng, int64_t n_draws);

} // namespace dalm::diff
