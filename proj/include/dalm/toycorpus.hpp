#pragma once
// Desk-scale corpus builder: synthesizes toy wavs and emits the stage-1
// transcription set, the stage-2 caption + multiple-choice QA set, and a
// held-out benchmark, each with train/val splits and a summary table.

#include <cstdint>
#include <string>
#include <vector>

#include "dalm/dataforge.hpp"
#include "dalm/eval.hpp"
#include "dalm/rng.hpp"
#include "dalm/toyspec.hpp"

namespace dalm::toy {

struct CorpusSpec {
    int64_t     n_stage1    = 64;  // transcription records
    int64_t     n_caption   = 64;  // stage-2 caption records
    int64_t     n_qa        = 256; // stage-2 QA records
    int64_t     n_benchmark = 128; // held-out multiple-choice items
    double      val_fraction = 0.1;
    double      rewrite_fraction = 0.0; // captions additionally paraphrased
    uint64_t    seed = 0;
    std::string out_dir;

    void validate() const; // throws ConfigError
};

struct CorpusFiles {
    std::string         wav_dir;
    std::string         stage1_train, stage1_val;
    std::string         stage2_train, stage2_val;
    std::string         benchmark;
    forge::BuildSummary stage1_summary, stage2_summary;
    int64_t             n_benchmark = 0;
};

// Uniform draw over the attribute grid; spoken text is 3..6 lexicon words,
// the first from the fixed four-way choice set; duration = words / speed.
forge::AudioMetadata sample_metadata(Rng & rng);

// The grid index a question's answer takes for the given metadata.
int answer_index_for(Question q, const forge::AudioMetadata & meta);

CorpusFiles build_toy_corpus(const CorpusSpec & spec);

} // namespace dalm::toy
