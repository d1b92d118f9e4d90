#include "dalm/diffusion.hpp"

#include <cmath>
#include <string>

#include "dalm/errors.hpp"

namespace dalm::diff {

using text::Role;
using text::TokenSequence;

DiffusionTime::DiffusionTime(double t_) : t(t_) {
    if (!(t > 0.0) || t > 1.0)
        throw ConfigError("diffusion time must lie in (0, 1], got " + std::to_string(t_));
}

VocabSpec::VocabSpec(int32_t size_, int32_t mask, int32_t end)
    : size(size_), mask_id(mask), end_id(end) {
    if (size <= 0) throw ConfigError("vocab size must be positive");
    if (mask_id == end_id) throw ConfigError("mask and end tokens must differ");
    if (mask_id < 0 || mask_id >= size || end_id < 0 || end_id >= size)
        throw ConfigError("mask/end token ids must lie inside the vocabulary");
}

DiffusionTime sample_time(Rng & rng, double epsilon) {
    if (!(epsilon > 0.0) || epsilon >= 1.0)
        throw ConfigError("time-sampling epsilon must lie in (0, 1)");
    return DiffusionTime(rng.uniform(epsilon, 1.0));
}

MaskedExample forward_mask(const TokenSequence & clean, DiffusionTime time, Rng & rng,
                           int32_t mask_id) {
    if (clean.count_role(Role::response) == 0)
        throw InvalidInputError("forward_mask: sequence has no response positions");

    MaskedExample ex{clean, clean, std::vector<uint8_t>(clean.size(), 0), time};
    for (size_t i = 0; i < clean.size(); ++i) {
        if (clean.roles[i] != Role::response) continue;
        if (rng.u01() < time.t) {
            ex.corrupted.ids[i] = mask_id;
            ex.mask[i]          = 1;
        }
    }
    return ex;
}

ad::TPtr masked_loss(ad::Tape & tape, const ad::TPtr & logits, const MaskedExample & ex,
                     int64_t row_offset, double extra_scale) {
    const int64_t rows = logits->rows;
    std::vector<int32_t> targets(size_t(rows), 0);
    std::vector<uint8_t> window(size_t(rows), 0);
    for (size_t i = 0; i < ex.mask.size(); ++i) {
        if (!ex.mask[i]) continue;
        const int64_t r = int64_t(i) - row_offset;
        if (r < 0 || r >= rows)
            throw InvalidInputError("masked_loss: masked position outside the logits window");
        targets[size_t(r)] = ex.clean.ids[i];
        window[size_t(r)]  = 1;
    }
    return tape.masked_nll(logits, targets, window, extra_scale / ex.time.t);
}

int64_t masked_argmax_hits(const ad::TPtr & logits, const MaskedExample & ex,
                           int64_t row_offset) {
    int64_t hits = 0;
    for (size_t i = 0; i < ex.mask.size(); ++i) {
        if (!ex.mask[i]) continue;
        const int64_t r = int64_t(i) - row_offset;
        if (r < 0 || r >= logits->rows) continue;
        const double * x    = logits->row(r);
        int64_t        best = 0;
        for (int64_t j = 1; j < logits->cols; ++j)
            if (x[j] > x[best]) best = j;
        hits += (best == ex.clean.ids[i]);
    }
    return hits;
}

double pattern_loss(const LogitsFn & predict, const TokenSequence & clean,
                    const std::vector<uint8_t> & mask, double t, int32_t mask_id) {
    TokenSequence corrupted = clean;
    bool          any       = false;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            corrupted.ids[i] = mask_id;
            any              = true;
        }
    }
    if (!any) return 0.0;

    const auto logits = predict(corrupted);
    double     total  = 0.0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const std::vector<double> & x = logits.at(i);
        double                      m = x[0];
        for (double v : x) m = std::max(m, v);
        double z = 0.0;
        for (double v : x) z += std::exp(v - m);
        total += m + std::log(z) - x[size_t(clean.ids[i])];
    }
    return total / t;
}

double loss_oracle(const LogitsFn & predict, const TokenSequence & clean, DiffusionTime time,
                   int32_t mask_id) {
    std::vector<size_t> response_pos;
    for (size_t i = 0; i < clean.size(); ++i)
        if (clean.roles[i] == Role::response) response_pos.push_back(i);
    const size_t lp = response_pos.size();
    if (lp == 0) throw InvalidInputError("loss_oracle: no response positions");
    if (lp > 12)
        throw InvalidInputError("loss_oracle: response length " + std::to_string(lp) +
                                " exceeds the enumeration limit of 12");

    const double t        = time.t;
    double       expected = 0.0;
    std::vector<uint8_t> mask(clean.size(), 0);
    for (uint64_t bits = 0; bits < (uint64_t(1) << lp); ++bits) {
        std::fill(mask.begin(), mask.end(), 0);
        int k = 0;
        for (size_t j = 0; j < lp; ++j) {
            if (bits >> j & 1) {
                mask[response_pos[j]] = 1;
                ++k;
            }
        }
        const double weight = std::pow(t, k) * std::pow(1.0 - t, double(lp - k));
        if (weight == 0.0) continue;
        expected += weight * pattern_loss(predict, clean, mask, t, mask_id);
    }
    return expected;
}

double masked_loss_mc(const LogitsFn & predict, const TokenSequence & clean, DiffusionTime time,
                      int32_t mask_id, Rng & rng, int64_t n_draws) {
    if (n_draws <= 0) throw ConfigError("masked_loss_mc: need at least one draw");
    double total = 0.0;
    for (int64_t d = 0; d < n_draws; ++d) {
        MaskedExample ex = forward_mask(clean, time, rng, mask_id);
        total += pattern_loss(predict, clean, ex.mask, time.t, mask_id);
    }
    return total / double(n_draws);
}

} // namespace dalm::diff
