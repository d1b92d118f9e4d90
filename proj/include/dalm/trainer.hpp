#pragma once
// Two-stage training. Stage 1 aligns the semantic adapter on transcription;
// stage 2 trains both adapters on caption-instruction data. Backbone,
// embeddings and encoder stay frozen throughout: the optimizer only ever
// touches trainable partitions, and partition hashes prove it.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dalm/dataforge.hpp"
#include "dalm/model.hpp"
#include "dalm/pipeline.hpp"
#include "dalm/rng.hpp"

namespace dalm::train {

struct StagePlan {
    int                   stage = 1; // 1 or 2
    std::set<std::string> trainable_partitions; // empty = derived from stage
    int64_t               epochs       = 10;
    double                lr           = 1e-4;
    int64_t               warmup_steps = 1000; // linear ramp, then constant
    int64_t               batch_size   = 128;
    uint64_t              seed         = 0;
    double                clip_norm    = 1.0;  // global-norm clip, logged when hit
    double                time_epsilon = 1e-3; // lower bound of the masking time draw
    double                mix_stage1_fraction = 0.0; // stage 2 only, defaults off

    // Stage-derived trainable set; throws ConfigError when the explicit set
    // names a frozen-by-contract partition (backbone, embeddings, encoder).
    std::set<std::string> resolved_trainable() const;
    void                  validate() const;
};

// "stage1-paper", "stage2-paper" (appendix hyperparameters) and the
// desk-scale "stage1-desk", "stage2-desk" used by the toy pipeline.
StagePlan stage_plan_preset(const std::string & name);

struct AdamConfig {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// One bias-corrected Adam update of p from gradient g at step t (1-based).
void adam_update(std::vector<double> & p, const std::vector<double> & g, std::vector<double> & m,
                 std::vector<double> & v, int64_t t, double lr, const AdamConfig & cfg);

// First/second-moment state aligned with registry order (all parameters,
// trainable or not, so stages can swap the trainable set without realigning).
struct AdamState {
    int64_t                          step = 0;
    std::vector<std::vector<double>> m, v;
};

struct StepMetrics {
    int64_t step;
    double  loss;
    double  lr;
    double  masked_acc;
    bool    clipped;
};

struct TrainResult {
    std::vector<StepMetrics> metrics;
    int64_t                  steps      = 0;
    double                   final_loss = 0.0;
};

class Trainer {
  public:
    Trainer(model::MaskPredictor & m, const StagePlan & plan, const text::Vocab & vocab);

    // Runs plan.epochs over the dataset. metrics_path, when non-empty, gets
    // one JSON line per step: {step, loss, lr, masked_acc, clipped}.
    // mix_source feeds plan.mix_stage1_fraction extra records per epoch.
    TrainResult run(const std::vector<forge::DatasetRecord> & dataset,
                    const std::string &                       metrics_path = "",
                    const std::vector<forge::DatasetRecord> & mix_source   = {});

    // One optimizer step over an explicit batch; exposed for tests.
    StepMetrics train_batch(const std::vector<forge::DatasetRecord> & batch);

    const AdamState & opt_state() const { return opt_; }
    AdamState &       opt_state() { return opt_; }
    Rng &             rng() { return rng_; }
    int64_t           global_step() const { return opt_.step; }

    // The clean prompt+response sequence a record trains on: the response is
    // the answer plus an end token, padded with ends to a multiple of 4.
    static text::TokenSequence build_example(const text::Vocab & vocab,
                                             const forge::DatasetRecord & rec);

  private:
    model::MaskPredictor & m_;
    StagePlan              plan_;
    text::Vocab            vocab_;
    AdamConfig             adam_;
    AdamState              opt_;
    Rng                    rng_;
    std::map<std::string, pipe::EncodedAudio> enc_cache_; // encoder is frozen

    const pipe::EncodedAudio & encoded(const std::string & audio_path);
    double                     lr_at(int64_t step) const;
    void                       apply_grads(bool & clipped);
    [[noreturn]] void          dump_and_abort(const std::vector<forge::DatasetRecord> & batch,
                                              const std::vector<double> & times, double loss);
};

// Versioned binary checkpoint: config, every parameter with its partition,
// optimizer state, rng state, step counter; CRC-32 integrity at the tail.
void save_checkpoint(const std::string & path, const model::MaskPredictor & m,
                     const AdamState * opt = nullptr, const Rng * rng = nullptr,
                     int64_t step = 0);

struct LoadedCheckpoint {
    model::MaskPredictor model;
    AdamState            opt;
    Rng                  rng;
    int64_t              step    = 0;
    bool                 has_opt = false;
};

// expect, when given, must hash-match the stored config (ConfigError).
// Corrupt or truncated files raise IntegrityError.
LoadedCheckpoint load_checkpoint(const std::string & path,
                                 const model::ModelConfig * expect = nullptr);

uint64_t config_hash(const model::ModelConfig & cfg);

} // namespace dalm::train
