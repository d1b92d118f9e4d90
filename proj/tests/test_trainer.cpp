// Trainer tests: optimizer arithmetic, schedules, freezing, checkpoints.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dalm/audio.hpp"
#include "dalm/dataforge.hpp"
#include "dalm/errors.hpp"
#include "dalm/model.hpp"
#include "dalm/toyaudio.hpp"
#include "dalm/toyspec.hpp"
#include "dalm/trainer.hpp"
#include "doctest.h"

using namespace dalm;
namespace fs = std::filesystem;

namespace {

model::ModelConfig tiny_config() {
    model::ModelConfig cfg;
    cfg.layers               = 1;
    cfg.heads                = 2;
    cfg.hidden               = 16;
    cfg.vocab_size           = toy::vocab().size();
    cfg.mask_id              = toy::vocab().mask_id;
    cfg.end_id               = toy::vocab().end_id;
    cfg.max_positions        = 128;
    cfg.encoder.hidden       = 16;
    cfg.encoder.layers       = 1;
    cfg.encoder.heads        = 2;
    cfg.semantic.conv_hidden = 16;
    cfg.semantic.proj_hidden = 16;
    cfg.acoustic.queries     = 4;
    cfg.acoustic.blocks      = 1;
    cfg.acoustic.heads       = 2;
    return cfg;
}

// Short fixed-grid utterances so the per-test synthesis cost stays small.
forge::AudioMetadata quick_metadata(int variant) {
    forge::AudioMetadata m;
    m.gender         = toy::kGenders[size_t(variant % 4)];
    m.age            = toy::kAges[size_t((variant + 1) % 4)];
    m.accent         = toy::kAccents[size_t((variant + 2) % 4)];
    m.emotion        = toy::kEmotions[size_t((variant + 3) % 4)];
    m.intent         = toy::kIntents[size_t(variant % 4)];
    m.pitch_hz       = toy::kPitchesHz[size_t(variant % 4)];
    m.volume         = toy::kVolumes[size_t((variant + 1) % 4)];
    m.speaking_speed = 5.0;
    std::string words[4] = {"take winding path", "winding stone lake", "path light river",
                            "lake shadow stone"};
    m.spoken_text = words[variant % 4];
    m.duration_s  = 0.6;
    return m;
}

// Writes n tiny wavs and returns transcription records pointing at them.
std::vector<forge::DatasetRecord> audio_records(const fs::path & dir, int n, uint64_t seed) {
    fs::create_directories(dir);
    std::vector<forge::DatasetRecord> recs;
    Rng                               rng(seed);
    for (int i = 0; i < n; ++i) {
        forge::AudioMetadata meta = quick_metadata(i);
        std::string          path = (dir / ("r" + std::to_string(i) + ".wav")).string();
        audio::write_wav(path, toy::synth_toy_audio(meta, rng));
        forge::DatasetRecord rec;
        rec.audio    = path;
        rec.metadata = meta;
        rec.question = toy::transcribe_prompt();
        rec.answer   = meta.spoken_text;
        rec.tags     = {"toy-asr", "transcription"};
        recs.push_back(std::move(rec));
    }
    return recs;
}

uint64_t part_hash(const model::MaskPredictor & m, model::Partition p) { return m.reg.hash(p); }

} // namespace

TEST_CASE("adam updates match the written-out recurrence") {
    // Oracle: p0=1, g=(0.5, 0.5) over two steps, lr=0.1, defaults elsewhere.
    train::AdamConfig   cfg;
    std::vector<double> p{1.0}, m{0.0}, v{0.0};
    std::vector<double> g{0.5};

    train::adam_update(p, g, m, v, 1, 0.1, cfg);
    double m1    = 0.1 * 0.5;                      // (1-b1) g
    double v1    = 0.001 * 0.25;                   // (1-b2) g^2
    double mhat1 = m1 / (1.0 - 0.9);
    double vhat1 = v1 / (1.0 - 0.999);
    double p1    = 1.0 - 0.1 * mhat1 / (std::sqrt(vhat1) + 1e-8);
    CHECK(std::abs(p[0] - p1) < 1e-15);
    CHECK(std::abs(m[0] - m1) < 1e-15);
    CHECK(std::abs(v[0] - v1) < 1e-15);

    train::adam_update(p, g, m, v, 2, 0.1, cfg);
    double m2    = 0.9 * m1 + 0.1 * 0.5;
    double v2    = 0.999 * v1 + 0.001 * 0.25;
    double mhat2 = m2 / (1.0 - 0.9 * 0.9);
    double vhat2 = v2 / (1.0 - 0.999 * 0.999);
    double p2    = p1 - 0.1 * mhat2 / (std::sqrt(vhat2) + 1e-8);
    CHECK(std::abs(p[0] - p2) < 1e-15);
}

TEST_CASE("training examples append an end-padded response") {
    const text::Vocab &  vocab = toy::vocab();
    forge::DatasetRecord qa;
    qa.question = "who is speaking ?\nA . man\nB . woman\nC . boy\nD . girl\nanswer with one letter .";
    qa.answer   = "B";
    auto seq    = train::Trainer::build_example(vocab, qa);
    auto prompt = vocab.encode(qa.question);
    REQUIRE(seq.size() == prompt.size() + 4);
    CHECK(seq.count_role(text::Role::prompt) == int64_t(prompt.size()));
    CHECK(seq.count_role(text::Role::response) == 4);
    size_t r0 = size_t(seq.first_role_index(text::Role::response));
    CHECK(seq.ids[r0] == vocab.id_of("B"));
    CHECK(seq.ids[r0 + 1] == vocab.end_id);
    CHECK(seq.ids[r0 + 2] == vocab.end_id);
    CHECK(seq.ids[r0 + 3] == vocab.end_id);

    forge::DatasetRecord asr;
    asr.question = toy::transcribe_prompt();
    asr.answer   = "take winding path lake river"; // 5 words + end -> pad to 8
    auto seq2    = train::Trainer::build_example(vocab, asr);
    CHECK(seq2.count_role(text::Role::response) == 8);
}

TEST_CASE("learning rate ramps linearly through warmup then holds") {
    auto cfg = tiny_config();
    Rng  rng(5);
    auto m = model::MaskPredictor::build(cfg, rng);

    train::StagePlan plan;
    plan.stage        = 2;
    plan.epochs       = 6;
    plan.lr           = 1e-3;
    plan.warmup_steps = 4;
    plan.batch_size   = 1;
    plan.seed         = 1;

    forge::DatasetRecord rec; // text-only: the schedule is what matters here
    rec.question = "how loud is the speaker ?";
    rec.answer   = "loud";

    fs::path dir = fs::temp_directory_path() / "dalm_trainer_lr";
    fs::create_directories(dir);
    std::string metrics_path = (dir / "metrics.jsonl").string();
    fs::remove(metrics_path);

    train::Trainer t(m, plan, toy::vocab());
    auto           result = t.run({rec}, metrics_path);
    REQUIRE(result.steps == 6);
    for (int i = 0; i < 6; ++i) {
        double want = 1e-3 * std::min(1.0, double(i + 1) / 4.0);
        CHECK(result.metrics[size_t(i)].lr == doctest::Approx(want).epsilon(1e-12));
        CHECK(result.metrics[size_t(i)].step == i + 1);
    }

    std::ifstream in(metrics_path);
    std::string   line;
    int           lines = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("loss"));
        CHECK(j.contains("lr"));
        CHECK(j.contains("masked_acc"));
        ++lines;
    }
    CHECK(lines == 6);
    fs::remove_all(dir);
}

TEST_CASE("stages freeze exactly the contracted partitions") {
    fs::path dir  = fs::temp_directory_path() / "dalm_trainer_freeze";
    auto     recs = audio_records(dir, 4, 77);
    auto     cfg  = tiny_config();

    Rng  rng(6);
    auto m = model::MaskPredictor::build(cfg, rng);

    uint64_t h_backbone = part_hash(m, model::Partition::backbone);
    uint64_t h_emb      = part_hash(m, model::Partition::embeddings);
    uint64_t h_enc      = part_hash(m, model::Partition::encoder);
    uint64_t h_sem      = part_hash(m, model::Partition::semantic_adapter);
    uint64_t h_aco      = part_hash(m, model::Partition::acoustic_adapter);

    train::StagePlan plan;
    plan.stage        = 1;
    plan.epochs       = 2;
    plan.lr           = 1e-3;
    plan.warmup_steps = 0;
    plan.batch_size   = 4;
    plan.seed         = 2;

    train::Trainer t1(m, plan, toy::vocab());
    t1.run(recs);
    CHECK(part_hash(m, model::Partition::backbone) == h_backbone);
    CHECK(part_hash(m, model::Partition::embeddings) == h_emb);
    CHECK(part_hash(m, model::Partition::encoder) == h_enc);
    CHECK(part_hash(m, model::Partition::acoustic_adapter) == h_aco); // stage 1 leaves it alone
    CHECK(part_hash(m, model::Partition::semantic_adapter) != h_sem);

    uint64_t h_sem_after = part_hash(m, model::Partition::semantic_adapter);
    plan.stage           = 2;
    train::Trainer t2(m, plan, toy::vocab());
    t2.run(recs);
    CHECK(part_hash(m, model::Partition::backbone) == h_backbone);
    CHECK(part_hash(m, model::Partition::embeddings) == h_emb);
    CHECK(part_hash(m, model::Partition::encoder) == h_enc);
    CHECK(part_hash(m, model::Partition::semantic_adapter) != h_sem_after);
    CHECK(part_hash(m, model::Partition::acoustic_adapter) != h_aco);
    fs::remove_all(dir);
}

TEST_CASE("plans validate and presets carry the published numbers") {
    train::StagePlan plan;
    plan.stage = 3;
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.stage  = 1;
    plan.epochs = 0;
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.epochs     = 1;
    plan.batch_size = 0;
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.batch_size           = 1;
    plan.trainable_partitions = {"backbone"};
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.trainable_partitions = {"no_such_partition"};
    CHECK_THROWS_AS(plan.validate(), ConfigError);
    plan.trainable_partitions.clear();
    plan.mix_stage1_fraction = 0.5; // stage 1 cannot mix itself
    CHECK_THROWS_AS(plan.validate(), ConfigError);

    auto s1 = train::stage_plan_preset("stage1-paper");
    CHECK(s1.stage == 1);
    CHECK(s1.lr == 1e-4);
    CHECK(s1.warmup_steps == 1000);
    CHECK(s1.batch_size == 128);
    CHECK(s1.epochs == 10);
    CHECK(s1.resolved_trainable() == std::set<std::string>{"semantic_adapter"});

    auto s2 = train::stage_plan_preset("stage2-paper");
    CHECK(s2.stage == 2);
    CHECK(s2.lr == 5e-5);
    CHECK(s2.warmup_steps == 2000);
    CHECK(s2.batch_size == 32);
    CHECK(s2.epochs == 10);
    CHECK(s2.resolved_trainable() ==
          std::set<std::string>{"acoustic_adapter", "semantic_adapter"});

    for (const char * name : {"stage1-desk", "stage2-desk"}) {
        auto d = train::stage_plan_preset(name);
        CHECK(d.batch_size >= 8);
        CHECK(d.batch_size <= 32);
    }
    CHECK_THROWS_AS(train::stage_plan_preset("stage3-paper"), ConfigError);
}

TEST_CASE("same seed reproduces the loss curve bit-exactly") {
    fs::path dir  = fs::temp_directory_path() / "dalm_trainer_repro";
    auto     recs = audio_records(dir, 3, 99);
    auto     cfg  = tiny_config();

    train::StagePlan plan;
    plan.stage        = 2;
    plan.epochs       = 3;
    plan.lr           = 1e-3;
    plan.warmup_steps = 2;
    plan.batch_size   = 2;
    plan.seed         = 42;

    Rng  ra(123), rb(123);
    auto ma = model::MaskPredictor::build(cfg, ra);
    auto mb = model::MaskPredictor::build(cfg, rb);

    auto out_a = train::Trainer(ma, plan, toy::vocab()).run(recs);
    auto out_b = train::Trainer(mb, plan, toy::vocab()).run(recs);
    REQUIRE(out_a.steps == out_b.steps);
    for (int64_t i = 0; i < out_a.steps; ++i) {
        CHECK(out_a.metrics[size_t(i)].loss == out_b.metrics[size_t(i)].loss);
        CHECK(out_a.metrics[size_t(i)].masked_acc == out_b.metrics[size_t(i)].masked_acc);
    }
    for (int p = 0; p < model::kPartitionCount; ++p)
        CHECK(part_hash(ma, model::Partition(p)) == part_hash(mb, model::Partition(p)));
    fs::remove_all(dir);
}

TEST_CASE("loss falls on a small overfit set") {
    fs::path dir  = fs::temp_directory_path() / "dalm_trainer_overfit";
    auto     recs = audio_records(dir, 2, 500);
    auto     cfg  = tiny_config();

    Rng  rng(7);
    auto m = model::MaskPredictor::build(cfg, rng);

    train::StagePlan plan;
    plan.stage        = 2;
    plan.epochs       = 30;
    plan.lr           = 3e-3;
    plan.warmup_steps = 5;
    plan.batch_size   = 2;
    plan.seed         = 4;

    auto   result = train::Trainer(m, plan, toy::vocab()).run(recs);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 5; ++i) {
        first += result.metrics[size_t(i)].loss;
        last += result.metrics[result.metrics.size() - 1 - size_t(i)].loss;
    }
    CHECK(last < first); // epoch-level trend, step noise averaged out
    fs::remove_all(dir);
}

TEST_CASE("divergence aborts with a diagnostic dump") {
    fs::path dir  = fs::temp_directory_path() / "dalm_trainer_nan";
    auto     recs = audio_records(dir, 2, 321);
    auto     cfg  = tiny_config();

    Rng  rng(8);
    auto m = model::MaskPredictor::build(cfg, rng);

    train::StagePlan plan;
    plan.stage        = 2;
    plan.epochs       = 20;
    plan.lr           = 1e200; // overflow the adapter stack before layernorm can rescue it
    plan.clip_norm    = 1e300; // clipping disabled in spirit
    plan.warmup_steps = 0;
    plan.batch_size   = 2;
    plan.seed         = 5;

    train::Trainer t(m, plan, toy::vocab());
    CHECK_THROWS_WITH_AS(t.run(recs), doctest::Contains("dumped"), IntegrityError);
    fs::remove_all(dir);
}

TEST_CASE("checkpoints round trip bit-exactly and reject damage") {
    fs::path dir = fs::temp_directory_path() / "dalm_trainer_ckpt";
    fs::create_directories(dir);
    auto cfg = tiny_config();

    Rng  rng(9);
    auto m = model::MaskPredictor::build(cfg, rng);

    // Give the optimizer and rng non-trivial state first.
    auto             recs = audio_records(dir / "wav", 2, 11);
    train::StagePlan plan;
    plan.stage        = 1;
    plan.epochs       = 2;
    plan.lr           = 1e-3;
    plan.warmup_steps = 1;
    plan.batch_size   = 2;
    plan.seed         = 10;
    train::Trainer t(m, plan, toy::vocab());
    t.run(recs);

    std::vector<int32_t> probe = toy::vocab().encode("who is speaking ? booming");
    ad::Tape             tape(false);
    ad::TPtr             before = m.forward(tape, nullptr, probe, 0, int64_t(probe.size()));

    std::string path = (dir / "model.ckpt").string();
    train::save_checkpoint(path, m, &t.opt_state(), &t.rng(), t.global_step());

    auto lc = train::load_checkpoint(path);
    CHECK(lc.step == t.global_step());
    CHECK(lc.has_opt);
    CHECK(lc.opt.step == t.opt_state().step);
    CHECK(lc.opt.m == t.opt_state().m); // exact doubles
    CHECK(lc.opt.v == t.opt_state().v);
    CHECK(lc.rng.save_state() == t.rng().save_state());

    ad::Tape tape2(false);
    ad::TPtr after = lc.model.forward(tape2, nullptr, probe, 0, int64_t(probe.size()));
    REQUIRE(after->numel() == before->numel());
    CHECK(after->v == before->v); // bit-exact forward after reload

    for (int p = 0; p < model::kPartitionCount; ++p)
        CHECK(lc.model.reg.hash(model::Partition(p)) == m.reg.hash(model::Partition(p)));

    // Stage-2 chain keeps the stage-1 semantic adapter.
    uint64_t h_sem = m.reg.hash(model::Partition::semantic_adapter);
    auto     lc2   = train::load_checkpoint(path, &cfg);
    CHECK(lc2.model.reg.hash(model::Partition::semantic_adapter) == h_sem);

    // Mismatched config expectation.
    auto other = cfg;
    other.hidden = 32;
    CHECK_THROWS_AS(train::load_checkpoint(path, &other), ConfigError);

    // Damage: truncation, corruption, wrong magic, missing file.
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    {
        std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
        out.write(bytes.data(), std::streamsize(bytes.size() - 10));
    }
    CHECK_THROWS_AS(train::load_checkpoint((dir / "trunc.ckpt").string()), IntegrityError);
    {
        std::string corrupt = bytes;
        corrupt[corrupt.size() / 2] ^= char(0x40);
        std::ofstream out(dir / "corrupt.ckpt", std::ios::binary);
        out.write(corrupt.data(), std::streamsize(corrupt.size()));
    }
    CHECK_THROWS_AS(train::load_checkpoint((dir / "corrupt.ckpt").string()), IntegrityError);
    {
        std::string wrong = bytes;
        wrong[0]          = 'X';
        std::ofstream out(dir / "magic.ckpt", std::ios::binary);
        out.write(wrong.data(), std::streamsize(wrong.size()));
    }
    CHECK_THROWS_AS(train::load_checkpoint((dir / "magic.ckpt").string()), IntegrityError);
    CHECK_THROWS_AS(train::load_checkpoint((dir / "missing.ckpt").string()), IoError);

    // Saving without optimizer state loads as model-only.
    std::string bare = (dir / "bare.ckpt").string();
    train::save_checkpoint(bare, m);
    auto lc3 = train::load_checkpoint(bare);
    CHECK(!lc3.has_opt);
    CHECK(lc3.step == 0);
    fs::remove_all(dir);
}

TEST_CASE("stage-2 mixing draws the configured extra records") {
    fs::path dir  = fs::temp_directory_path() / "dalm_trainer_mix";
    auto     recs = audio_records(dir, 4, 888);
    auto     mix  = audio_records(dir / "mix", 4, 889);
    auto     cfg  = tiny_config();

    Rng  rng(10);
    auto m = model::MaskPredictor::build(cfg, rng);

    train::StagePlan plan;
    plan.stage               = 2;
    plan.epochs              = 1;
    plan.lr                  = 1e-3;
    plan.warmup_steps        = 0;
    plan.batch_size          = 1;
    plan.seed                = 6;
    plan.mix_stage1_fraction = 0.5;

    auto result = train::Trainer(m, plan, toy::vocab()).run(recs, "", mix);
    CHECK(result.steps == 6); // 4 records + round(0.5 * 4) mixed in

    plan.mix_stage1_fraction = 0.0;
    Rng  rng2(10);
    auto m2      = model::MaskPredictor::build(cfg, rng2);
    auto result2 = train::Trainer(m2, plan, toy::vocab()).run(recs, "", mix);
    CHECK(result2.steps == 4); // flag defaults off: no mixing
    fs::remove_all(dir);
}
