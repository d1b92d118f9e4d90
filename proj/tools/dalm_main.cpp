// dalm: datagen | train | decode | eval | inspect. One process per command;
// every failure is a single machine-parseable stderr line and a distinct
// exit code (config 2, invalid-input 3, schedule 4, integrity 5, io 6,
// internal 10).
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dalm/audio.hpp"
#include "dalm/config.hpp"
#include "dalm/dataforge.hpp"
#include "dalm/decoder.hpp"
#include "dalm/errors.hpp"
#include "dalm/eval.hpp"
#include "dalm/pipeline.hpp"
#include "dalm/toycorpus.hpp"
#include "dalm/toyspec.hpp"
#include "dalm/trainer.hpp"

namespace fs = std::filesystem;
using namespace dalm;

namespace {

struct CliArgs {
    std::string             config_path;
    std::optional<uint64_t> seed;

    // datagen
    std::string gen_out;

    // train
    std::optional<int> stage;
    std::string        init_ckpt, out_ckpt, train_data, mix_data, metrics_path;

    // decode / eval
    std::string ckpt, audio_path, prompt, preset, confidence;
    std::string trace_out, json_out, benchmark_path;
    bool        heatmap = false;

    // inspect
    std::string trace_in;
};

void write_text_atomic(const std::string & path, const std::string & text) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + path);
        out << text;
    }
    fs::rename(tmp, p);
}

cfg::RunConfig load_config(const CliArgs & a) {
    cfg::RunConfig c = a.config_path.empty() ? cfg::RunConfig() : cfg::read_run_config(a.config_path);
    if (a.seed) c.seed = *a.seed;
    return c;
}

void maybe_snapshot(const cfg::RunConfig & c) {
    if (!c.output_dir.empty()) cfg::write_resolved_snapshot(c);
}

int cmd_datagen(const CliArgs & a) {
    cfg::RunConfig c = load_config(a);
    if (!a.gen_out.empty()) c.data.corpus_dir = a.gen_out;
    if (c.data.corpus_dir.empty())
        throw ConfigError("corpus directory not set: pass --out or [data] corpus_dir");

    toy::CorpusSpec spec;
    spec.n_stage1         = c.data.n_stage1;
    spec.n_caption        = c.data.n_caption;
    spec.n_qa             = c.data.n_qa;
    spec.n_benchmark      = c.data.n_benchmark;
    spec.val_fraction     = c.data.val_fraction;
    spec.rewrite_fraction = c.data.rewrite_fraction;
    spec.seed             = c.seed;
    spec.out_dir          = c.data.corpus_dir;

    toy::CorpusFiles files = toy::build_toy_corpus(spec);

    // Point the snapshot at what was just built so it can drive train/eval.
    c.data.train     = files.stage2_train;
    c.data.val       = files.stage2_val;
    c.data.mix       = files.stage1_train;
    c.data.benchmark = files.benchmark;
    maybe_snapshot(c);

    std::cout << "wav_dir: " << files.wav_dir << "\n";
    std::cout << "stage1_train: " << files.stage1_train << "\n";
    std::cout << "stage1_val: " << files.stage1_val << "\n";
    std::cout << "stage1_records: " << files.stage1_summary.samples << "\n";
    std::cout << "stage2_train: " << files.stage2_train << "\n";
    std::cout << "stage2_val: " << files.stage2_val << "\n";
    std::cout << "stage2_records: " << files.stage2_summary.samples << "\n";
    std::cout << "benchmark: " << files.benchmark << " (" << files.n_benchmark << " items)\n";
    return 0;
}

int cmd_train(const CliArgs & a) {
    cfg::RunConfig c = load_config(a);
    if (a.stage) {
        // Bare flag selects the desk preset for that stage; with a config
        // file it only overrides the stage number and keeps the tuned fields.
        if (a.config_path.empty())
            c.stage = train::stage_plan_preset("stage" + std::to_string(*a.stage) + "-desk");
        else
            c.stage.stage = *a.stage;
    }
    c.stage.seed = c.seed;

    std::string data_path = a.train_data.empty() ? c.data.train : a.train_data;
    if (data_path.empty()) throw ConfigError("training data not set: pass --data or [data] train");

    std::string out_path = a.out_ckpt;
    if (out_path.empty() && !c.output_dir.empty())
        out_path = (fs::path(c.output_dir) / ("stage" + std::to_string(c.stage.stage) + ".ckpt"))
                       .string();
    if (out_path.empty())
        throw ConfigError("checkpoint output not set: pass --out or a top-level output_dir");

    std::string metrics = a.metrics_path;
    if (metrics.empty() && !c.output_dir.empty())
        metrics = (fs::path(c.output_dir) /
                   ("metrics-stage" + std::to_string(c.stage.stage) + ".jsonl"))
                      .string();

    std::vector<forge::DatasetRecord> records = forge::read_dataset(data_path);
    std::vector<forge::DatasetRecord> mix;
    if (c.stage.mix_stage1_fraction > 0.0) {
        std::string mix_path = a.mix_data.empty() ? c.data.mix : a.mix_data;
        if (mix_path.empty())
            throw ConfigError("mix_fraction is set but no stage-1 source: pass --mix or [data] mix");
        mix = forge::read_dataset(mix_path);
    }

    model::MaskPredictor m = [&] {
        if (!a.init_ckpt.empty()) {
            auto loaded = train::load_checkpoint(a.init_ckpt, &c.model);
            return std::move(loaded.model);
        }
        Rng build_rng(c.seed);
        return model::MaskPredictor::build(c.model, build_rng);
    }();

    maybe_snapshot(c);

    train::Trainer     trainer(m, c.stage, toy::vocab());
    train::TrainResult result = trainer.run(records, metrics, mix);

    train::save_checkpoint(out_path, m, &trainer.opt_state(), &trainer.rng(),
                           trainer.global_step());

    std::cout << "stage: " << c.stage.stage << "\n";
    std::cout << "steps: " << result.steps << "\n";
    std::cout << "final_loss: " << result.final_loss << "\n";
    if (!metrics.empty()) std::cout << "metrics: " << metrics << "\n";
    std::cout << "checkpoint: " << out_path << "\n";
    return 0;
}

int cmd_decode(const CliArgs & a) {
    cfg::RunConfig c = load_config(a);
    if (!a.preset.empty()) c.schedule = dec::schedule_preset(a.preset);
    if (!a.confidence.empty()) c.confidence = dec::confidence_from_name(a.confidence);

    auto                 loaded = train::load_checkpoint(a.ckpt);
    model::MaskPredictor m      = std::move(loaded.model);

    const text::Vocab &  vocab      = toy::vocab();
    std::vector<int32_t> prompt_ids = vocab.encode(a.prompt);

    ad::Tape tape(false);
    ad::TPtr prefix;
    if (!a.audio_path.empty()) {
        audio::Waveform w = audio::read_wav(a.audio_path);
        prefix            = pipe::prefix_from_waveform(tape, m, w);
    }

    maybe_snapshot(c);

    Rng  rng(c.seed);
    bool keep_trace = !a.trace_out.empty() || a.heatmap;
    auto result = dec::decode(m, prefix, prompt_ids, c.schedule, rng, keep_trace, c.confidence);

    if (!a.trace_out.empty()) write_text_atomic(a.trace_out, dec::trace_csv(result.trace));

    std::cout << vocab.decode(result.tokens) << "\n";
    if (a.heatmap) std::cout << "\n" << dec::trace_heatmap(result.trace, c.schedule.answer_length);
    return 0;
}

int cmd_eval(const CliArgs & a) {
    cfg::RunConfig c = load_config(a);
    if (!a.preset.empty()) c.schedule = dec::schedule_preset(a.preset);

    std::string bench_path = a.benchmark_path.empty() ? c.data.benchmark : a.benchmark_path;
    if (bench_path.empty())
        throw ConfigError("benchmark not set: pass --benchmark or [data] benchmark");

    auto                 loaded = train::load_checkpoint(a.ckpt);
    model::MaskPredictor m      = std::move(loaded.model);

    std::vector<eval::BenchmarkItem> items = eval::read_benchmark(bench_path);

    maybe_snapshot(c);

    eval::EvalReport report = eval::evaluate(m, toy::vocab(), items, c.schedule);

    if (!a.json_out.empty()) write_text_atomic(a.json_out, eval::report_json(report));
    std::cout << eval::report_table(report);
    return 0;
}

int cmd_inspect(const CliArgs & a) {
    std::ifstream in(a.trace_in);
    if (!in) throw IoError("cannot read trace file: " + a.trace_in);

    std::string header;
    if (!std::getline(in, header) || header != "step,block,position,token,confidence,action")
        throw IntegrityError("not a decode trace: unexpected header in " + a.trace_in);

    std::vector<dec::TraceEntry> trace;
    int64_t                      answer_length = 0;
    std::string                  line;
    int                          lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream        ss(line);
        std::string              field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw IntegrityError("trace line " + std::to_string(lineno) + ": expected 6 fields");
        try {
            dec::TraceEntry e{};
            e.step       = std::stoll(fields[0]);
            e.block      = std::stoll(fields[1]);
            e.position   = std::stoll(fields[2]);
            e.token      = int32_t(std::stol(fields[3]));
            e.confidence = std::stod(fields[4]);
            if (fields[5] == "unmask") e.action = "unmask";
            else if (fields[5] == "remask") e.action = "remask";
            else
                throw IntegrityError("trace line " + std::to_string(lineno) +
                                     ": unknown action '" + fields[5] + "'");
            answer_length = std::max(answer_length, e.position + 1);
            trace.push_back(e);
        } catch (const std::invalid_argument &) {
            throw IntegrityError("trace line " + std::to_string(lineno) + ": malformed number");
        } catch (const std::out_of_range &) {
            throw IntegrityError("trace line " + std::to_string(lineno) + ": number out of range");
        }
    }
    if (trace.empty()) throw IntegrityError("trace file has no entries: " + a.trace_in);

    int64_t steps = 0, unmasks = 0, remasks = 0;
    for (const auto & e : trace) {
        steps = std::max(steps, e.step + 1);
        if (std::string(e.action) == "unmask") ++unmasks;
        else ++remasks;
    }
    std::cout << "steps: " << steps << "\n";
    std::cout << "positions: " << answer_length << "\n";
    std::cout << "unmask_events: " << unmasks << "\n";
    std::cout << "remask_events: " << remasks << "\n\n";
    std::cout << dec::trace_heatmap(trace, answer_length);
    return 0;
}

std::string one_line(std::string s) {
    for (auto & ch : s)
        if (ch == '\n' || ch == '\r') ch = ';';
    return s;
}

} // namespace

int main(int argc, char ** argv) {
    CliArgs  a;
    CLI::App app{"masked-diffusion audio language model toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", a.config_path, "run config file (key-value text)");
    app.add_option("--seed", a.seed, "override the config seed");

    auto * gen = app.add_subcommand("datagen", "synthesize the toy corpus and benchmark");
    gen->add_option("--out", a.gen_out, "corpus output directory (overrides [data] corpus_dir)");

    auto * tr = app.add_subcommand("train", "run one training stage");
    tr->add_option("--stage", a.stage,
                   "1 or 2; picks the stageN-desk preset, or with --config overrides "
                   "just the stage number")
        ->check(CLI::Range(1, 2));
    tr->add_option("--init", a.init_ckpt, "checkpoint to start from (chains stage 1 -> 2)");
    tr->add_option("--out", a.out_ckpt, "checkpoint output path");
    tr->add_option("--data", a.train_data, "training records (overrides [data] train)");
    tr->add_option("--mix", a.mix_data, "stage-1 records to mix in (overrides [data] mix)");
    tr->add_option("--metrics", a.metrics_path, "metrics JSONL path");

    auto * de = app.add_subcommand("decode", "denoise a response for one prompt");
    de->add_option("--ckpt", a.ckpt, "model checkpoint")->required();
    de->add_option("--prompt", a.prompt, "prompt text")->required();
    de->add_option("--audio", a.audio_path, "wav file for the audio prefix");
    de->add_option("--preset", a.preset, "schedule preset: mmsu, mmau, alpacaeval");
    de->add_option("--confidence", a.confidence, "probability, margin, or neg_entropy");
    de->add_option("--trace", a.trace_out, "write the unmasking trace CSV here");
    de->add_flag("--heatmap", a.heatmap, "print the unmasking-order heatmap");

    auto * ev = app.add_subcommand("eval", "score a multiple-choice benchmark");
    ev->add_option("--ckpt", a.ckpt, "model checkpoint")->required();
    ev->add_option("--benchmark", a.benchmark_path, "benchmark JSONL (overrides [data] benchmark)");
    ev->add_option("--preset", a.preset, "schedule preset: mmsu, mmau, alpacaeval");
    ev->add_option("--json", a.json_out, "also write the report as JSON here");

    auto * in = app.add_subcommand("inspect", "render a decode trace");
    in->add_option("--trace", a.trace_in, "trace CSV produced by decode --trace")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success & e) {
        return app.exit(e); // --help and friends
    } catch (const CLI::ParseError & e) {
        std::cerr << "dalm: error: config: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_datagen(a);
        if (tr->parsed()) return cmd_train(a);
        if (de->parsed()) return cmd_decode(a);
        if (ev->parsed()) return cmd_eval(a);
        return cmd_inspect(a);
    } catch (const ScheduleError & e) {
        std::cerr << "dalm: error: schedule: " << one_line(e.what()) << "\n";
        return 4;
    } catch (const ConfigError & e) {
        std::cerr << "dalm: error: config: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const InvalidInputError & e) {
        std::cerr << "dalm: error: invalid-input: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const IntegrityError & e) {
        std::cerr << "dalm: error: integrity: " << one_line(e.what()) << "\n";
        return 5;
    } catch (const IoError & e) {
        std::cerr << "dalm: error: io: " << one_line(e.what()) << "\n";
        return 6;
    } catch (const std::exception & e) {
        std::cerr << "dalm: error: internal: " << one_line(e.what()) << "\n";
        return 10;
    }
}
