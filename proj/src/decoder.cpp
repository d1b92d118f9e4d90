// Block-wise denoising decode with low-confidence remasking.
#include "dalm/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dalm/errors.hpp"

namespace dalm::dec {

namespace {

std::string s64(int64_t v) { return std::to_string(v); }

} // namespace

Confidence confidence_from_name(const std::string & name) {
    if (name == "probability") return Confidence::probability;
    if (name == "margin") return Confidence::margin;
    if (name == "neg_entropy") return Confidence::neg_entropy;
    throw ConfigError("unknown confidence measure '" + name +
                      "' (expected probability, margin, or neg_entropy)");
}

const char * confidence_name(Confidence c) {
    switch (c) {
        case Confidence::probability: return "probability";
        case Confidence::margin: return "margin";
        case Confidence::neg_entropy: return "neg_entropy";
    }
    return "?";
}

DecodeSchedule make_schedule(int64_t answer_length, int64_t block_length, int64_t steps) {
    if (answer_length < 1 || block_length < 1 || steps < 1)
        throw ScheduleError("schedule: answer_length, block_length and steps must all be >= 1");
    if (block_length > answer_length)
        throw ScheduleError("schedule: block_length " + s64(block_length) +
                            " exceeds answer_length " + s64(answer_length) +
                            "; largest valid block_length is " + s64(answer_length));
    if (answer_length % block_length != 0) {
        int64_t lo = block_length, hi = block_length;
        while (lo > 1 && answer_length % lo != 0) --lo;
        while (hi < answer_length && answer_length % hi != 0) ++hi;
        throw ScheduleError("schedule: answer_length " + s64(answer_length) +
                            " is not divisible by block_length " + s64(block_length) +
                            "; nearest valid block lengths are " + s64(lo) + " and " + s64(hi));
    }
    const int64_t nb = answer_length / block_length;
    if (steps % nb != 0) {
        int64_t lo = (steps / nb) * nb;
        if (lo < nb) lo = nb;
        throw ScheduleError("schedule: steps " + s64(steps) + " is not divisible by the " +
                            s64(nb) + " blocks; nearest valid step counts are " + s64(lo) +
                            " and " + s64(lo + nb));
    }
    if (steps / nb > block_length)
        throw ScheduleError("schedule: " + s64(steps / nb) + " steps per block exceed the " +
                            s64(block_length) +
                            " tokens per block; largest valid steps is " + s64(answer_length));
    return DecodeSchedule{answer_length, block_length, steps};
}

DecodeSchedule schedule_preset(const std::string & name) {
    if (name == "mmsu") return make_schedule(4, 4, 4);
    if (name == "mmau") return make_schedule(16, 16, 16);
    if (name == "alpacaeval") return make_schedule(128, 32, 128);
    throw ConfigError("unknown schedule preset '" + name +
                      "'; known presets: mmsu, mmau, alpacaeval");
}

int64_t DecodeState::masked_count() const {
    int64_t n = 0;
    for (uint8_t m : masked) n += m ? 1 : 0;
    return n;
}

DecodeState init_state(const DecodeSchedule & sched, int32_t mask_id) {
    DecodeState st;
    st.tokens.assign(size_t(sched.answer_length), mask_id);
    st.masked.assign(size_t(sched.answer_length), 1);
    st.confidences.assign(size_t(sched.answer_length), 0.0);
    return st;
}

void denoise_step(const model::MaskPredictor & m, const ad::TPtr & prefix,
                  const std::vector<int32_t> & prompt_ids, const DecodeSchedule & sched,
                  DecodeState & state, std::vector<TraceEntry> * trace, Confidence conf) {
    const int64_t B  = sched.block_length;
    const int64_t n  = sched.steps_per_block();
    const int64_t b  = state.current_block;
    const int64_t lo = b * B, hi = lo + B;
    if (b < 0 || b >= sched.num_blocks())
        throw ContractError("denoise_step: current_block outside the schedule");
    if (int64_t(state.tokens.size()) != sched.answer_length)
        throw ContractError("denoise_step: state does not match the schedule");

    std::vector<int64_t> mpos;
    for (int64_t p = lo; p < hi; ++p)
        if (state.masked[size_t(p)]) mpos.push_back(p);
    if (mpos.empty()) throw ContractError("denoise_step: block already finished");

    const int64_t j = state.step_index - b * n + 1; // 1-based step within the block
    if (j < 1 || j > n) throw ContractError("denoise_step: step index outside the current block");

    std::vector<int32_t> ids = prompt_ids;
    ids.insert(ids.end(), state.tokens.begin(), state.tokens.end());
    const int64_t left = int64_t(prompt_ids.size());

    ad::Tape tape(false);
    ad::TPtr logits = m.forward(tape, prefix, ids, left + lo, left + hi);

    struct Cand {
        int64_t pos;
        int32_t tok;
        double  conf;
    };
    std::vector<Cand>   cands;
    std::vector<double> p(size_t(logits->cols));
    for (int64_t pos : mpos) {
        const double * row = logits->row(pos - lo);
        double         mx  = row[0];
        for (int64_t k = 1; k < logits->cols; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (int64_t k = 0; k < logits->cols; ++k) {
            p[size_t(k)] = std::exp(row[k] - mx);
            z += p[size_t(k)];
        }
        for (auto & x : p) x /= z;

        // argmax over emittable tokens: the mask token is never produced
        int32_t best = -1;
        double  best_p = -1.0, second_p = -1.0;
        for (int64_t k = 0; k < logits->cols; ++k) {
            if (int32_t(k) == m.cfg.mask_id) continue;
            if (p[size_t(k)] > best_p) {
                second_p = best_p;
                best_p   = p[size_t(k)];
                best     = int32_t(k);
            } else if (p[size_t(k)] > second_p) {
                second_p = p[size_t(k)];
            }
        }
        double c = 0.0;
        switch (conf) {
            case Confidence::probability: c = best_p; break;
            case Confidence::margin: c = best_p - std::max(second_p, 0.0); break;
            case Confidence::neg_entropy: {
                for (double x : p) c += x > 0.0 ? x * std::log(x) : 0.0;
                break;
            }
        }
        state.confidences[size_t(pos)] = c;
        cands.push_back(Cand{pos, best, c});
    }

    // Cumulative unmask quota: after per-block step j of n, round(j*B/n)
    // positions of the block are decided. The remainder is re-masked, which
    // realizes the lowest-confidence remasking rule on a linear time grid.
    const int64_t already = B - int64_t(mpos.size());
    const int64_t target  = std::llround(double(j) * double(B) / double(n));
    int64_t       keep    = std::clamp<int64_t>(target - already, 0, int64_t(cands.size()));

    // Highest confidence first; stable sort keeps lower positions ahead on ties.
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand & a, const Cand & b2) { return a.conf > b2.conf; });
    for (size_t i = 0; i < cands.size(); ++i) {
        const Cand & c = cands[i];
        const bool   take = int64_t(i) < keep;
        if (take) {
            state.tokens[size_t(c.pos)] = c.tok;
            state.masked[size_t(c.pos)] = 0;
        }
        if (trace)
            trace->push_back(TraceEntry{state.step_index, b, c.pos, c.tok, c.conf,
                                        take ? "unmask" : "remask"});
    }
    ++state.step_index;
}

DecodeResult decode(const model::MaskPredictor & m, const ad::TPtr & prefix,
                    const std::vector<int32_t> & prompt_ids, const DecodeSchedule & sched,
                    Rng & rng, bool keep_trace, Confidence conf) {
    (void)rng; // argmax decoding is deterministic
    (void)make_schedule(sched.answer_length, sched.block_length, sched.steps);
    const int64_t rows = prefix ? prefix->rows : 0;
    const int64_t total = rows + int64_t(prompt_ids.size()) + sched.answer_length;
    if (total > m.cfg.max_positions)
        throw InvalidInputError("decode: sequence of " + s64(total) +
                                " positions exceeds max_positions " +
                                s64(m.cfg.max_positions));

    DecodeState  st = init_state(sched, m.cfg.mask_id);
    DecodeResult res;
    std::vector<TraceEntry> * tr = keep_trace ? &res.trace : nullptr;
    for (int64_t b = 0; b < sched.num_blocks(); ++b) {
        st.current_block = b;
        for (int64_t j = 0; j < sched.steps_per_block(); ++j)
            denoise_step(m, prefix, prompt_ids, sched, st, tr, conf);
    }
    if (st.masked_count() != 0)
        throw ContractError("decode: positions left masked after the schedule");

    res.full = st.tokens;
    for (int32_t id : st.tokens) {
        if (id == m.cfg.end_id) break;
        res.tokens.push_back(id);
    }
    return res;
}

std::string trace_jsonl(const std::vector<TraceEntry> & trace) {
    std::ostringstream os;
    char buf[64];
    for (const TraceEntry & e : trace) {
        std::snprintf(buf, sizeof buf, "%.17g", e.confidence);
        os << "{\"step\":" << e.step << ",\"block\":" << e.block
           << ",\"position\":" << e.position << ",\"token\":" << e.token
           << ",\"confidence\":" << buf << ",\"action\":\"" << e.action << "\"}\n";
    }
    return os.str();
}

std::string trace_csv(const std::vector<TraceEntry> & trace) {
    std::ostringstream os;
    os << "step,block,position,token,confidence,action\n";
    char buf[64];
    for (const TraceEntry & e : trace) {
        std::snprintf(buf, sizeof buf, "%.17g", e.confidence);
        os << e.step << ',' << e.block << ',' << e.position << ',' << e.token << ',' << buf
           << ',' << e.action << '\n';
    }
    return os.str();
}

std::string trace_heatmap(const std::vector<TraceEntry> & trace, int64_t answer_length) {
    int64_t steps = 0;
    std::vector<int64_t> decided(size_t(answer_length), -1);
    for (const TraceEntry & e : trace) {
        steps = std::max(steps, e.step + 1);
        if (e.action == std::string("unmask") && e.position >= 0 &&
            e.position < answer_length)
            decided[size_t(e.position)] = e.step;
    }
    std::ostringstream os;
    for (int64_t s = 0; s < steps; ++s) {
        for (int64_t p2 = 0; p2 < answer_length; ++p2) {
            const int64_t d = decided[size_t(p2)];
            os << (d == s ? '#' : (d == -1 || d > s) ? '.' : ' ');
        }
        os << '\n';
    }
    return os.str();
}

} // namespace dalm::dec
