#pragma once
// Run configuration: a key-value text format with sections [model], [stage],
// [schedule], [data] plus top-level output_dir and seed. Keys apply top to
// bottom; a `preset` key replaces its whole section, later keys override
// single fields. Unknown sections and keys are rejected. render/parse round
// trip exactly, so a resolved snapshot reproduces the run.

#include <cstdint>
#include <string>

#include "dalm/decoder.hpp"
#include "dalm/model.hpp"
#include "dalm/trainer.hpp"

namespace dalm::cfg {

// Named model sizes: "desk" (CPU-minutes scale, toy vocabulary) and "paper"
// (publication-scale dimensions kept for documentation; not meant to train
// on a desk). Unknown names raise ConfigError listing the choices.
model::ModelConfig model_preset(const std::string & name);

struct DataConfig {
    std::string train;      // training records, JSON lines
    std::string val;        // held-out records
    std::string mix;        // stage-1 records mixed into stage 2 (optional)
    std::string benchmark;  // multiple-choice items for eval
    std::string corpus_dir; // datagen output root
    int64_t     n_stage1 = 64, n_caption = 64, n_qa = 256, n_benchmark = 128;
    double      val_fraction     = 0.1;
    double      rewrite_fraction = 0.0;

    void validate() const; // counts and fractions only; paths checked at use
};

struct RunConfig {
    model::ModelConfig  model;    // defaults to model_preset("desk")
    train::StagePlan    stage;    // defaults to stage_plan_preset("stage1-desk")
    dec::DecodeSchedule schedule; // defaults to schedule_preset("mmsu")
    dec::Confidence     confidence = dec::Confidence::probability;
    DataConfig          data;
    std::string         output_dir;
    uint64_t            seed = 0;

    RunConfig();
};

// Parses config text; throws ConfigError (ScheduleError for bad triples)
// with the offending line number.
RunConfig parse_run_config(const std::string & text);

// File wrapper: IoError when unreadable.
RunConfig read_run_config(const std::string & path);

// Fully resolved text (no preset keys); parse_run_config inverts it.
std::string render_run_config(const RunConfig & c);

// Writes render_run_config to <output_dir>/resolved.ini (atomic, creating
// directories) and returns the path. ConfigError when output_dir is empty.
std::string write_resolved_snapshot(const RunConfig & c);

} // namespace dalm::cfg
