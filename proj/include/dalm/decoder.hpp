#pragma once
// Iterative denoising inference: the response starts fully masked and is
// decided block by block, left to right. Every step predicts all masked
// positions of the current block by argmax, scores them by confidence, keeps
// the highest-confidence predictions up to a cumulative quota, and re-masks
// the rest. Pure argmax: no sampling, deterministic for a fixed model.

#include <cstdint>
#include <string>
#include <vector>

#include "dalm/model.hpp"

namespace dalm::dec {

// How per-position confidence is measured. probability is the softmax mass
// of the argmax token; margin is the gap to the runner-up; neg_entropy is
// the negated entropy of the full distribution.
enum class Confidence { probability, margin, neg_entropy };

Confidence  confidence_from_name(const std::string & name);
const char * confidence_name(Confidence c);

struct DecodeSchedule {
    int64_t answer_length = 0;
    int64_t block_length  = 0;
    int64_t steps         = 0;

    int64_t num_blocks() const { return answer_length / block_length; }
    int64_t steps_per_block() const { return steps / num_blocks(); }
};

// Validates divisibility; rejections carry suggested nearest valid values.
DecodeSchedule make_schedule(int64_t answer_length, int64_t block_length, int64_t steps);

// Named (answer, block, steps) presets: "mmsu" (4,4,4), "mmau" (16,16,16),
// "alpacaeval" (128,32,128); unknown names raise ConfigError listing them.
DecodeSchedule schedule_preset(const std::string & name);

struct DecodeState {
    std::vector<int32_t> tokens;      // response region, mask_id while masked
    std::vector<uint8_t> masked;      // per response position
    std::vector<double>  confidences; // last computed confidence per position
    int64_t              current_block = 0;
    int64_t              step_index    = 0;

    int64_t masked_count() const;
};

struct TraceEntry {
    int64_t     step;
    int64_t     block;
    int64_t     position; // response-relative
    int32_t     token;
    double      confidence;
    const char * action; // "unmask" or "remask"
};

struct DecodeResult {
    std::vector<int32_t>    tokens; // truncated before the first end token
    std::vector<int32_t>    full;   // all answer_length positions
    std::vector<TraceEntry> trace;
};

DecodeState init_state(const DecodeSchedule & sched, int32_t mask_id);

// One denoising step within state.current_block. Requires at least one
// masked position there; throws ContractError otherwise. Advances
// step_index; never touches positions outside the block or already decided.
void denoise_step(const model::MaskPredictor & m, const ad::TPtr & prefix,
                  const std::vector<int32_t> & prompt_ids, const DecodeSchedule & sched,
                  DecodeState & state, std::vector<TraceEntry> * trace,
                  Confidence conf = Confidence::probability);

// Full schedule-driven decode. prefix may be null (text-only). The rng is
// accepted for interface stability; argmax decoding draws nothing from it.
DecodeResult decode(const model::MaskPredictor & m, const ad::TPtr & prefix,
                    const std::vector<int32_t> & prompt_ids, const DecodeSchedule & sched,
                    Rng & rng, bool keep_trace = false,
                    Confidence conf = Confidence::probability);

// One line-delimited JSON record per trace entry.
std::string trace_jsonl(const std::vector<TraceEntry> & trace);

// Plot-ready CSV (step,block,position,token,confidence,action).
std::string trace_csv(const std::vector<TraceEntry> & trace);

// Text heatmap: rows are steps, columns response positions, '#' decided
// this step, '.' still masked, ' ' decided earlier.
std::string trace_heatmap(const std::vector<TraceEntry> & trace, int64_t answer_length);

} // namespace dalm::dec
