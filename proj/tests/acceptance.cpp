// Acceptance gate: ten go/no-go checks, one PASS/FAIL line each. Criteria 4
// and 8 share one full two-stage pipeline run; everything else builds its own
// fixture. Exit code is the number of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dalm/audio.hpp"
#include "dalm/config.hpp"
#include "dalm/dataforge.hpp"
#include "dalm/decoder.hpp"
#include "dalm/diffusion.hpp"
#include "dalm/errors.hpp"
#include "dalm/eval.hpp"
#include "dalm/hashutil.hpp"
#include "dalm/model.hpp"
#include "dalm/pipeline.hpp"
#include "dalm/rng.hpp"
#include "dalm/tensor.hpp"
#include "dalm/toycorpus.hpp"
#include "dalm/toyspec.hpp"
#include "dalm/trainer.hpp"

using namespace dalm;
namespace fs = std::filesystem;
using Clock  = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool        pass = false;
    std::string detail;
};

std::string fmt(double x, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    return buf;
}

// ---------------------------------------------------------------- fixtures

std::array<uint64_t, model::kPartitionCount> partition_hashes(const model::MaskPredictor & m) {
    std::array<uint64_t, model::kPartitionCount> h{};
    for (int p = 0; p < model::kPartitionCount; ++p) h[size_t(p)] = m.reg.hash(model::Partition(p));
    return h;
}

// One full datagen -> stage 1 -> stage 2 -> eval run at the desk preset,
// shared by criteria 4 (freeze hashes) and 8 (accuracy and wall time).
struct PipelineRun {
    std::array<uint64_t, model::kPartitionCount> h_init{}, h_stage1{}, h_stage2{};
    eval::EvalReport                             report;
    double                                       seconds     = 0.0;
    int64_t                                      n_benchmark = 0;
    std::string                                  error; // non-empty = the run itself failed
};

const PipelineRun & pipeline_run() {
    static PipelineRun r = [] {
        PipelineRun out;
        try {
            std::cerr << "[fixture] end-to-end pipeline: datagen + two stages + eval "
                         "(minutes at desk scale)\n";
            auto     t0  = Clock::now();
            fs::path dir = fs::temp_directory_path() / "dalm_acceptance_pipeline";
            fs::remove_all(dir);

            toy::CorpusSpec spec;
            spec.n_stage1    = 64;
            spec.n_caption   = 64;
            spec.n_qa        = 256;
            spec.n_benchmark = 128;
            spec.seed        = 7;
            spec.out_dir     = dir.string();
            auto files       = toy::build_toy_corpus(spec);
            std::cerr << "[fixture] corpus done (" << fmt(seconds_since(t0), 4) << "s)\n";

            Rng  build_rng(7);
            auto m     = model::MaskPredictor::build(cfg::model_preset("desk"), build_rng);
            out.h_init = partition_hashes(m);

            auto s1 = train::stage_plan_preset("stage1-desk");
            s1.seed = 7;
            train::Trainer t1(m, s1, toy::vocab());
            auto           r1 = t1.run(forge::read_dataset(files.stage1_train));
            out.h_stage1      = partition_hashes(m);
            std::cerr << "[fixture] stage 1 done: " << r1.steps << " steps, final loss "
                      << fmt(r1.final_loss, 4) << " (" << fmt(seconds_since(t0), 4) << "s)\n";

            auto s2 = train::stage_plan_preset("stage2-desk");
            s2.seed = 8;
            train::Trainer t2(m, s2, toy::vocab());
            auto           r2 = t2.run(forge::read_dataset(files.stage2_train));
            out.h_stage2      = partition_hashes(m);
            std::cerr << "[fixture] stage 2 done: " << r2.steps << " steps, final loss "
                      << fmt(r2.final_loss, 4) << " (" << fmt(seconds_since(t0), 4) << "s)\n";

            auto items      = eval::read_benchmark(files.benchmark);
            out.n_benchmark = int64_t(items.size());
            out.report      = eval::evaluate(m, toy::vocab(), items, dec::schedule_preset("mmsu"));
            out.seconds     = seconds_since(t0);
            std::cerr << "[fixture] eval done: accuracy "
                      << fmt(out.report.overall_accuracy, 4) << " over " << out.n_benchmark
                      << " items; total " << fmt(out.seconds, 4) << "s\n";
            fs::remove_all(dir);
        } catch (const std::exception & e) {
            out.error = e.what();
        }
        return out;
    }();
    return r;
}

// ------------------------------------------------------------- criterion 1

Outcome criterion_loss_oracle() {
    auto t0 = Clock::now();

    model::ModelConfig cfg;
    cfg.layers                     = 1;
    cfg.heads                      = 2;
    cfg.hidden                     = 16;
    cfg.vocab_size                 = 8; // the criterion caps the vocabulary at 8
    cfg.mask_id                    = 0;
    cfg.end_id                     = 1;
    cfg.max_positions              = 16;
    cfg.encoder.n_mels             = 8;
    cfg.encoder.hidden             = 8;
    cfg.encoder.layers             = 1;
    cfg.encoder.heads              = 1;
    cfg.encoder.intermediate_layer = 1;
    cfg.semantic.conv_hidden       = 8;
    cfg.semantic.proj_hidden       = 8;
    cfg.acoustic.queries           = 2;
    cfg.acoustic.blocks            = 1;
    cfg.acoustic.heads             = 2;

    Rng  rng(11);
    auto m = model::MaskPredictor::build(cfg, rng);

    text::TokenSequence clean;
    clean.append({2, 5}, text::Role::prompt);
    clean.append({3, 7, 4, 6}, text::Role::response); // L' = 4

    diff::LogitsFn predict = [&](const text::TokenSequence & corrupted) {
        ad::Tape tape(false);
        ad::TPtr logits = m.forward(tape, nullptr, corrupted.ids, 0, int64_t(corrupted.size()));
        std::vector<std::vector<double>> rows(size_t(logits->rows));
        for (int64_t i = 0; i < logits->rows; ++i)
            rows[size_t(i)].assign(logits->v.begin() + i * logits->cols,
                                   logits->v.begin() + (i + 1) * logits->cols);
        return rows;
    };

    double worst = 0.0;
    for (double t : {0.25, 0.5, 0.75, 1.0}) {
        double oracle = diff::loss_oracle(predict, clean, diff::DiffusionTime(t), cfg.mask_id);
        Rng    mc_rng(101);
        double mc =
            diff::masked_loss_mc(predict, clean, diff::DiffusionTime(t), cfg.mask_id, mc_rng,
                                 100000);
        double rel = std::abs(mc - oracle) / std::abs(oracle);
        worst      = std::max(worst, rel);
    }

    double  el = seconds_since(t0);
    Outcome o;
    o.pass   = worst < 0.01 && el < 30.0;
    o.detail = "max relative error " + fmt(worst * 100.0) + "% over t in {0.25,0.5,0.75,1.0}, " +
               fmt(el, 3) + "s";
    return o;
}

// ------------------------------------------------------------- criterion 2

Outcome criterion_gradients() {
    auto t0 = Clock::now();

    model::ModelConfig cfg;
    cfg.layers                     = 1;
    cfg.heads                      = 2;
    cfg.hidden                     = 12;
    cfg.vocab_size                 = 12;
    cfg.mask_id                    = 0;
    cfg.end_id                     = 1;
    cfg.max_positions              = 32;
    cfg.encoder.n_mels             = 6;
    cfg.encoder.hidden             = 6;
    cfg.encoder.layers             = 1;
    cfg.encoder.heads              = 1;
    cfg.encoder.intermediate_layer = 1;
    cfg.semantic.conv_hidden       = 6;
    cfg.semantic.proj_hidden       = 8;
    cfg.acoustic.queries           = 2;
    cfg.acoustic.blocks            = 1;
    cfg.acoustic.heads             = 2;

    Rng  rng(13);
    auto m = model::MaskPredictor::build(cfg, rng);

    int64_t n_params = 0;
    for (const auto & p : m.reg.params) n_params += p.t->numel();
    if (n_params > 10000)
        return {false, "model has " + std::to_string(n_params) + " > 10^4 parameters"};

    Rng      mel_rng(14);
    ad::TPtr mel = ad::randn(mel_rng, 16, cfg.encoder.n_mels, 1.0, false);

    diff::MaskedExample ex{{}, {}, {}, diff::DiffusionTime(0.6)};
    ex.clean.append({2, 5, 9}, text::Role::prompt);
    ex.clean.append({3, 7, 4, 6, 8}, text::Role::response);
    ex.corrupted = ex.clean;
    ex.mask.assign(ex.clean.size(), 0);
    for (size_t i : {size_t(3), size_t(5), size_t(7)}) { // three response positions
        ex.mask[i]          = 1;
        ex.corrupted.ids[i] = cfg.mask_id;
    }

    int64_t resp_begin = ex.clean.first_role_index(text::Role::response);

    auto loss_value = [&](ad::Tape & tape) {
        auto     enc      = m.encode(tape, mel, cfg.encoder.in_frame_rate);
        ad::TPtr semantic = m.semantic_adapt(tape, enc.final_states);
        ad::TPtr acoustic = m.acoustic_adapt(tape, enc.intermediate);
        ad::TPtr prefix   = m.fuse_prefix(tape, semantic, acoustic);
        ad::TPtr logits =
            m.forward(tape, prefix, ex.corrupted.ids, resp_begin, int64_t(ex.corrupted.size()));
        return diff::masked_loss(tape, logits, ex, resp_begin);
    };

    ad::Tape tape(true);
    ad::TPtr loss = loss_value(tape);
    tape.backward(loss);

    const std::set<std::string> checked = {"backbone", "semantic_adapter", "acoustic_adapter",
                                           "embeddings"};
    double       worst      = 0.0;
    int64_t      n_checked  = 0;
    const double eps        = 1e-5;
    for (auto & p : m.reg.params) {
        if (!checked.count(model::partition_name(p.part))) continue;
        for (int64_t i = 0; i < p.t->numel(); ++i) {
            double saved = p.t->v[size_t(i)];
            p.t->v[size_t(i)] = saved + eps;
            ad::Tape tp(false);
            double   up = loss_value(tp)->v[0];
            p.t->v[size_t(i)] = saved - eps;
            ad::Tape tm(false);
            double   dn = loss_value(tm)->v[0];
            p.t->v[size_t(i)] = saved;

            double fd = (up - dn) / (2.0 * eps);
            double an = p.t->g[size_t(i)];
            if (std::abs(fd) < 1e-12 && std::abs(an) < 1e-12) continue;
            double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-10});
            worst      = std::max(worst, rel);
            ++n_checked;
        }
    }

    double  el = seconds_since(t0);
    Outcome o;
    o.pass   = worst <= 1e-4 && el < 60.0;
    o.detail = "worst relative error " + fmt(worst) + " over " + std::to_string(n_checked) +
               " of " + std::to_string(n_params) + " params, " + fmt(el, 3) + "s";
    return o;
}

// ------------------------------------------------------------- criterion 3

Outcome criterion_mask_stats() {
    const int64_t trials = 10000, resp = 1000;

    text::TokenSequence clean;
    for (int i = 0; i < 10; ++i) clean.append(3, text::Role::audio_prefix);
    for (int i = 0; i < 10; ++i) clean.append(4, text::Role::prompt);
    for (int i = 0; i < resp; ++i) clean.append(5, text::Role::response);

    Rng     rng(21);
    int64_t total_masked = 0, nonresponse_masked = 0;
    for (int64_t n = 0; n < trials; ++n) {
        auto ex = diff::forward_mask(clean, diff::DiffusionTime(0.3), rng, 0);
        for (size_t i = 0; i < ex.mask.size(); ++i) {
            if (!ex.mask[i]) continue;
            ++total_masked;
            if (ex.clean.roles[i] != text::Role::response) ++nonresponse_masked;
        }
    }

    double mean  = double(total_masked) / double(trials);
    double sigma = std::sqrt(double(resp) * 0.3 * 0.7 / double(trials));
    bool   within = std::abs(mean - 300.0) <= 3.0 * sigma;

    Outcome o;
    o.pass   = within && nonresponse_masked == 0;
    o.detail = "mean masked " + fmt(mean, 6) + " (3-sigma band 300 +/- " + fmt(3.0 * sigma) +
               "), prompt/audio masks: " + std::to_string(nonresponse_masked);
    return o;
}

// ------------------------------------------------------------- criterion 4

Outcome criterion_freeze() {
    const PipelineRun & run = pipeline_run();
    if (!run.error.empty()) return {false, "pipeline run failed: " + run.error};

    auto idx = [](model::Partition p) { return size_t(p); };

    bool backbone_frozen = run.h_init[idx(model::Partition::backbone)] ==
                               run.h_stage1[idx(model::Partition::backbone)] &&
                           run.h_init[idx(model::Partition::backbone)] ==
                               run.h_stage2[idx(model::Partition::backbone)];
    bool encoder_frozen = run.h_init[idx(model::Partition::encoder)] ==
                              run.h_stage1[idx(model::Partition::encoder)] &&
                          run.h_init[idx(model::Partition::encoder)] ==
                              run.h_stage2[idx(model::Partition::encoder)];
    bool emb_frozen = run.h_init[idx(model::Partition::embeddings)] ==
                          run.h_stage1[idx(model::Partition::embeddings)] &&
                      run.h_init[idx(model::Partition::embeddings)] ==
                          run.h_stage2[idx(model::Partition::embeddings)];
    bool stage1_semantic_only =
        run.h_init[idx(model::Partition::semantic_adapter)] !=
            run.h_stage1[idx(model::Partition::semantic_adapter)] &&
        run.h_init[idx(model::Partition::acoustic_adapter)] ==
            run.h_stage1[idx(model::Partition::acoustic_adapter)];
    bool stage2_trains_both =
        run.h_stage1[idx(model::Partition::semantic_adapter)] !=
            run.h_stage2[idx(model::Partition::semantic_adapter)] &&
        run.h_stage1[idx(model::Partition::acoustic_adapter)] !=
            run.h_stage2[idx(model::Partition::acoustic_adapter)];

    Outcome o;
    o.pass   = backbone_frozen && encoder_frozen && emb_frozen && stage1_semantic_only &&
             stage2_trains_both;
    o.detail = std::string("backbone ") + (backbone_frozen ? "frozen" : "CHANGED") +
               ", encoder " + (encoder_frozen ? "frozen" : "CHANGED") + ", embeddings " +
               (emb_frozen ? "frozen" : "CHANGED") + ", stage 1 semantic-only " +
               (stage1_semantic_only ? "yes" : "NO") + ", stage 2 both adapters " +
               (stage2_trains_both ? "yes" : "NO");
    return o;
}

// ------------------------------------------------------------- criterion 5

Outcome criterion_overfit() {
    auto t0 = Clock::now();

    fs::path dir = fs::temp_directory_path() / "dalm_acceptance_overfit";
    fs::remove_all(dir);
    toy::CorpusSpec spec;
    spec.n_stage1     = 16;
    spec.n_caption    = 0;
    spec.n_qa         = 0;
    spec.n_benchmark  = 0;
    spec.val_fraction = 0.0;
    spec.seed         = 31;
    spec.out_dir      = dir.string();
    auto files        = toy::build_toy_corpus(spec);
    auto records      = forge::read_dataset(files.stage1_train);
    if (records.size() != 16)
        return {false, "expected 16 pairs, got " + std::to_string(records.size())};

    Rng  rng(32);
    auto m = model::MaskPredictor::build(cfg::model_preset("desk"), rng);

    auto plan = train::stage_plan_preset("stage1-desk");
    plan.seed = 33;
    train::Trainer t(m, plan, toy::vocab());
    t.run(records);

    const text::Vocab & vocab = toy::vocab();

    // Masked-token accuracy with every response position masked.
    int64_t hits = 0, total = 0;
    int64_t exact = 0;
    for (const auto & rec : records) {
        auto seq = train::Trainer::build_example(vocab, rec);

        diff::MaskedExample ex{{}, {}, {}, diff::DiffusionTime(1.0)};
        ex.clean     = seq;
        ex.corrupted = seq;
        ex.mask.assign(seq.size(), 0);
        for (size_t i = 0; i < seq.size(); ++i) {
            if (seq.roles[i] != text::Role::response) continue;
            ex.mask[i]          = 1;
            ex.corrupted.ids[i] = vocab.mask_id;
        }
        int64_t resp_begin = seq.first_role_index(text::Role::response);
        int64_t resp_len   = seq.count_role(text::Role::response);

        ad::Tape tape(false);
        ad::TPtr prefix = pipe::prefix_from_waveform(tape, m, audio::read_wav(rec.audio));
        ad::TPtr logits = m.forward(tape, prefix, ex.corrupted.ids, resp_begin,
                                    int64_t(ex.corrupted.size()));
        hits += diff::masked_argmax_hits(logits, ex, resp_begin);
        total += resp_len;

        // Exact decode reproduction: one token finalized per step.
        auto sched  = dec::make_schedule(resp_len, resp_len, resp_len);
        Rng  dec_rng(0);
        auto prompt = vocab.encode(rec.question);
        auto result = dec::decode(m, prefix, prompt, sched, dec_rng);
        if (vocab.decode(result.tokens) == rec.answer) ++exact;
    }

    double acc = double(hits) / double(total);
    double el  = seconds_since(t0);

    Outcome o;
    o.pass   = acc >= 0.99 && exact == 16 && el < 600.0;
    o.detail = "masked accuracy " + fmt(acc, 5) + ", exact decodes " + std::to_string(exact) +
               "/16, " + fmt(el, 4) + "s";
    fs::remove_all(dir);
    return o;
}

// ------------------------------------------------------------- criterion 6

Outcome criterion_decoder_invariants() {
    auto t0 = Clock::now();

    model::ModelConfig cfg;
    cfg.layers        = 1;
    cfg.heads         = 2;
    cfg.hidden        = 16;
    cfg.vocab_size    = toy::vocab().size();
    cfg.mask_id       = toy::vocab().mask_id;
    cfg.end_id        = toy::vocab().end_id;
    cfg.max_positions = 160;
    cfg.encoder.hidden = 8;
    cfg.encoder.layers = 1;
    cfg.encoder.heads  = 1;
    cfg.semantic.conv_hidden = 8;
    cfg.semantic.proj_hidden = 8;
    cfg.acoustic.queries     = 2;
    cfg.acoustic.blocks      = 1;
    cfg.acoustic.heads       = 2;

    Rng  rng(41);
    auto m = model::MaskPredictor::build(cfg, rng); // random weights by design

    std::vector<int32_t> prompt = toy::vocab().encode("what can you hear ?");

    std::vector<std::string> violations;
    for (const char * name : {"mmsu", "mmau", "alpacaeval"}) {
        auto sched = dec::schedule_preset(name);
        Rng  dec_rng(0);
        auto result = dec::decode(m, nullptr, prompt, sched, dec_rng, true);

        std::set<int64_t>            steps_seen;
        std::vector<int64_t>         finalized_at(size_t(sched.answer_length), -1);
        std::vector<int64_t>         per_block(size_t(sched.num_blocks()), 0);
        std::map<int64_t, int64_t>   unmasks_per_step;
        bool                         ok = true;
        for (const auto & e : result.trace) {
            steps_seen.insert(e.step);
            if (std::string(e.action) != "unmask") {
                if (finalized_at[size_t(e.position)] != -1) {
                    violations.push_back(std::string(name) + ": remask of a finalized position");
                    ok = false;
                }
                continue;
            }
            ++unmasks_per_step[e.step];
            if (finalized_at[size_t(e.position)] != -1) {
                violations.push_back(std::string(name) + ": position finalized twice");
                ok = false;
            }
            finalized_at[size_t(e.position)] = e.step;
            // Every earlier block must already be complete.
            for (int64_t b = 0; b < e.block; ++b)
                if (per_block[size_t(b)] != sched.block_length) {
                    violations.push_back(std::string(name) + ": block " + std::to_string(e.block) +
                                         " touched before block " + std::to_string(b) +
                                         " finished");
                    ok = false;
                }
            ++per_block[size_t(e.block)];
            // Finalized tokens immutable: the trace token must be the output.
            if (result.full[size_t(e.position)] != e.token) {
                violations.push_back(std::string(name) + ": finalized token changed later");
                ok = false;
            }
        }
        if (int64_t(steps_seen.size()) != sched.steps)
            violations.push_back(std::string(name) + ": executed " +
                                 std::to_string(steps_seen.size()) + " steps, scheduled " +
                                 std::to_string(sched.steps));
        for (int64_t pos = 0; pos < sched.answer_length; ++pos)
            if (finalized_at[size_t(pos)] == -1) {
                violations.push_back(std::string(name) + ": position " + std::to_string(pos) +
                                     " never finalized");
                break;
            }
        if (std::string(name) == "mmau" && ok)
            for (const auto & [step, n] : unmasks_per_step)
                if (n != 1) {
                    violations.push_back("mmau: step " + std::to_string(step) + " finalized " +
                                         std::to_string(n) + " tokens, expected 1");
                    break;
                }
    }

    double  el = seconds_since(t0);
    Outcome o;
    o.pass = violations.empty() && el < 10.0;
    o.detail =
        violations.empty()
            ? "all invariants hold over (4,4,4), (16,16,16), (128,32,128), " + fmt(el, 3) + "s"
            : violations.front() + " [+" + std::to_string(violations.size() - 1) + " more]";
    return o;
}

// ------------------------------------------------------------- criterion 7

Outcome criterion_chance_baseline() {
    auto t0 = Clock::now();

    Rng                              rng(51);
    std::vector<eval::BenchmarkItem> items;
    for (int i = 0; i < 1000; ++i) {
        auto meta = toy::sample_metadata(rng);
        auto q    = toy::Question(i % toy::kQuestionCount);
        eval::BenchmarkItem item;
        item.question     = toy::question_text(q);
        auto choices      = toy::question_choices(q);
        item.choices.assign(choices.begin(), choices.end());
        item.answer_index = toy::answer_index_for(q, meta);
        item.category     = toy::question_category(q);
        items.push_back(std::move(item));
    }

    model::ModelConfig cfg = cfg::model_preset("desk");
    cfg.hidden             = 64; // untrained either way; smaller keeps this quick
    cfg.heads              = 2;
    cfg.layers             = 2;

    Rng  build_rng(52);
    auto m      = model::MaskPredictor::build(cfg, build_rng);
    auto report = eval::evaluate(m, toy::vocab(), items, dec::schedule_preset("mmsu"));

    double sigma   = std::sqrt(1000.0 * 0.25 * 0.75) / 1000.0;
    bool   within  = std::abs(report.overall_accuracy - 0.25) <= 3.0 * sigma;
    double el      = seconds_since(t0);

    Outcome o;
    o.pass   = within;
    o.detail = "accuracy " + fmt(report.overall_accuracy, 4) + " (band 0.25 +/- " +
               fmt(3.0 * sigma, 3) + "), abstained " + std::to_string(report.abstained) + ", " +
               fmt(el, 4) + "s";
    return o;
}

// ------------------------------------------------------------- criterion 8

Outcome criterion_end_to_end() {
    const PipelineRun & run = pipeline_run();
    if (!run.error.empty()) return {false, "pipeline run failed: " + run.error};

    Outcome o;
    o.pass   = run.report.overall_accuracy >= 0.90 && run.seconds < 1800.0;
    o.detail = "held-out accuracy " + fmt(run.report.overall_accuracy, 4) + " over " +
               std::to_string(run.n_benchmark) + " items (threshold 0.90), pipeline " +
               fmt(run.seconds, 4) + "s (budget 1800s)";
    return o;
}

// ------------------------------------------------------------- criterion 9

Outcome criterion_presets() {
    std::vector<std::string> problems;

    auto expect = [&](const char * name, int64_t a, int64_t b, int64_t s) {
        try {
            auto sc = dec::schedule_preset(name);
            if (sc.answer_length != a || sc.block_length != b || sc.steps != s)
                problems.push_back(std::string(name) + " loaded (" +
                                   std::to_string(sc.answer_length) + "," +
                                   std::to_string(sc.block_length) + "," +
                                   std::to_string(sc.steps) + ")");
        } catch (const std::exception & e) {
            problems.push_back(std::string(name) + ": " + e.what());
        }
    };
    expect("mmsu", 4, 4, 4);
    expect("mmau", 16, 16, 16);
    expect("alpacaeval", 128, 32, 128);

    // Indivisible triples must be rejected with a diagnostic suggestion.
    try {
        dec::make_schedule(5, 4, 5);
        problems.push_back("answer 5 / block 4 accepted");
    } catch (const ScheduleError & e) {
        if (std::string(e.what()).find("nearest") == std::string::npos)
            problems.push_back("rejection carries no suggestion: " + std::string(e.what()));
    }
    try {
        dec::make_schedule(16, 16, 3);
        problems.push_back("steps 3 over 1 block of 16 accepted");
    } catch (const ScheduleError &) {
    }

    Outcome o;
    o.pass   = problems.empty();
    o.detail = problems.empty()
                   ? "mmsu (4,4,4), mmau (16,16,16), alpacaeval (128,32,128); indivisible rejected"
                   : problems.front();
    return o;
}

// ------------------------------------------------------------ criterion 10

Outcome criterion_determinism() {
    auto t0 = Clock::now();

    fs::path dir = fs::temp_directory_path() / "dalm_acceptance_det";
    fs::remove_all(dir);
    toy::CorpusSpec spec;
    spec.n_stage1     = 6;
    spec.n_caption    = 0;
    spec.n_qa         = 0;
    spec.n_benchmark  = 0;
    spec.val_fraction = 0.0;
    spec.seed         = 61;
    spec.out_dir      = dir.string();
    auto files        = toy::build_toy_corpus(spec);
    auto records      = forge::read_dataset(files.stage1_train);

    model::ModelConfig cfg = cfg::model_preset("desk");
    cfg.hidden             = 32;
    cfg.heads              = 2;
    cfg.layers             = 2;
    cfg.acoustic.queries   = 4;
    cfg.encoder.hidden     = 16;
    cfg.encoder.heads      = 2;
    cfg.encoder.layers     = 1;
    cfg.semantic.conv_hidden = 16;
    cfg.semantic.proj_hidden = 32;

    auto plan         = train::stage_plan_preset("stage1-desk");
    plan.epochs       = 3;
    plan.batch_size   = 3;
    plan.warmup_steps = 2;
    plan.seed         = 62;

    std::vector<std::string> problems;

    // Identical seeds, identical loss curves and final weights.
    Rng  ra(63), rb(63);
    auto ma    = model::MaskPredictor::build(cfg, ra);
    auto mb    = model::MaskPredictor::build(cfg, rb);
    auto out_a = train::Trainer(ma, plan, toy::vocab()).run(records);
    auto out_b = train::Trainer(mb, plan, toy::vocab()).run(records);
    if (out_a.steps != out_b.steps) problems.push_back("step counts differ");
    for (size_t i = 0; i < out_a.metrics.size() && problems.empty(); ++i) {
        if (out_a.metrics[i].loss != out_b.metrics[i].loss)
            problems.push_back("loss curves diverge at step " + std::to_string(i + 1));
        if (out_a.metrics[i].masked_acc != out_b.metrics[i].masked_acc)
            problems.push_back("accuracy curves diverge at step " + std::to_string(i + 1));
    }
    if (partition_hashes(ma) != partition_hashes(mb))
        problems.push_back("final weights differ between identical runs");

    // Decode is bit-exact across repeats and across a checkpoint round trip.
    auto     wav    = audio::read_wav(records.front().audio);
    ad::Tape tape(false);
    ad::TPtr prefix  = pipe::prefix_from_waveform(tape, ma, wav);
    auto     prompt  = toy::vocab().encode(records.front().question);
    auto     sched   = dec::schedule_preset("mmsu");
    Rng      d1(0), d2(0);
    auto     dec_a = dec::decode(ma, prefix, prompt, sched, d1);
    auto     dec_b = dec::decode(ma, prefix, prompt, sched, d2);
    if (dec_a.full != dec_b.full) problems.push_back("repeat decode differs");

    std::string ckpt = (dir / "det.ckpt").string();
    train::save_checkpoint(ckpt, ma);
    auto loaded = train::load_checkpoint(ckpt);
    if (partition_hashes(loaded.model) != partition_hashes(ma))
        problems.push_back("checkpoint round trip changed parameters");
    ad::Tape tape2(false);
    ad::TPtr prefix2 = pipe::prefix_from_waveform(tape2, loaded.model, wav);
    Rng      d3(0);
    auto     dec_c = dec::decode(loaded.model, prefix2, prompt, sched, d3);
    if (dec_c.full != dec_a.full) problems.push_back("decode differs after checkpoint reload");

    fs::remove_all(dir);

    Outcome o;
    o.pass   = problems.empty();
    o.detail = problems.empty() ? "loss curves, decode outputs and checkpoints bit-exact, " +
                                      fmt(seconds_since(t0), 4) + "s"
                                : problems.front();
    return o;
}

} // namespace

int main(int argc, char ** argv) {
    struct Entry {
        int            id;
        const char *   title;
        Outcome (*fn)();
    };
    const Entry entries[] = {
        {1, "loss-oracle equivalence", criterion_loss_oracle},
        {2, "gradient correctness", criterion_gradients},
        {3, "masking statistics", criterion_mask_stats},
        {4, "freezing contract", criterion_freeze},
        {5, "stage-1 overfit", criterion_overfit},
        {6, "decoder invariants", criterion_decoder_invariants},
        {7, "chance baseline", criterion_chance_baseline},
        {8, "end-to-end toy pipeline", criterion_end_to_end},
        {9, "schedule presets", criterion_presets},
        {10, "determinism", criterion_determinism},
    };

    int only = 0;
    if (argc > 1) only = std::atoi(argv[1]);

    int failures = 0;
    for (const auto & e : entries) {
        if (only != 0 && e.id != only) continue;
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception & ex) {
            o.pass   = false;
            o.detail = std::string("threw: ") + ex.what();
        }
        std::printf("criterion %2d %s  %s: %s\n", e.id, o.pass ? "PASS" : "FAIL", e.title,
                    o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    if (only == 0)
        std::printf("%s: %d/10 criteria passed\n", failures == 0 ? "ACCEPTED" : "REJECTED",
                    10 - failures);
    return failures;
}
