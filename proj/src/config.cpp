// Run-config parsing, rendering and the resolved snapshot.
#include "dalm/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dalm/errors.hpp"
#include "dalm/toyspec.hpp"

namespace dalm::cfg {

namespace {

std::string trim(const std::string & s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string & what, int line) {
    throw ConfigError(what + " (line " + std::to_string(line) + ")");
}

int64_t to_i64(const std::string & key, const std::string & v, int line) {
    char *  end = nullptr;
    int64_t out = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
        fail("key '" + key + "': expected an integer, got '" + v + "'", line);
    return out;
}

uint64_t to_u64(const std::string & key, const std::string & v, int line) {
    if (!v.empty() && v[0] == '-')
        fail("key '" + key + "': expected a non-negative integer, got '" + v + "'", line);
    char *   end = nullptr;
    uint64_t out = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
        fail("key '" + key + "': expected a non-negative integer, got '" + v + "'", line);
    return out;
}

double to_f64(const std::string & key, const std::string & v, int line) {
    char * end = nullptr;
    double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size())
        fail("key '" + key + "': expected a number, got '" + v + "'", line);
    return out;
}

std::set<std::string> to_name_set(const std::string & v) {
    std::set<std::string> out;
    std::string           item;
    std::stringstream     ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.insert(item);
    }
    return out;
}

std::string fmt_f64(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void apply_model_key(model::ModelConfig & m, const std::string & key, const std::string & v,
                     int line) {
    if (key == "preset") m = model_preset(v);
    else if (key == "layers") m.layers = to_i64(key, v, line);
    else if (key == "heads") m.heads = to_i64(key, v, line);
    else if (key == "hidden") m.hidden = to_i64(key, v, line);
    else if (key == "max_positions") m.max_positions = to_i64(key, v, line);
    else if (key == "rotary_base") m.rotary_base = to_f64(key, v, line);
    else if (key == "norm_epsilon") m.norm_epsilon = to_f64(key, v, line);
    else if (key == "encoder_mels") m.encoder.n_mels = to_i64(key, v, line);
    else if (key == "encoder_hidden") m.encoder.hidden = to_i64(key, v, line);
    else if (key == "encoder_layers") m.encoder.layers = to_i64(key, v, line);
    else if (key == "encoder_heads") m.encoder.heads = to_i64(key, v, line);
    else if (key == "encoder_intermediate_layer")
        m.encoder.intermediate_layer = to_i64(key, v, line);
    else if (key == "encoder_frame_rate") m.encoder.in_frame_rate = to_f64(key, v, line);
    else if (key == "semantic_conv_hidden") m.semantic.conv_hidden = to_i64(key, v, line);
    else if (key == "semantic_kernel") m.semantic.kernel = int(to_i64(key, v, line));
    else if (key == "semantic_proj_hidden") m.semantic.proj_hidden = to_i64(key, v, line);
    else if (key == "acoustic_queries") m.acoustic.queries = to_i64(key, v, line);
    else if (key == "acoustic_blocks") m.acoustic.blocks = to_i64(key, v, line);
    else if (key == "acoustic_heads") m.acoustic.heads = to_i64(key, v, line);
    else fail("unknown key '" + key + "' in [model]", line);
}

void apply_stage_key(train::StagePlan & p, const std::string & key, const std::string & v,
                     int line) {
    if (key == "preset") p = train::stage_plan_preset(v);
    else if (key == "stage") p.stage = int(to_i64(key, v, line));
    else if (key == "epochs") p.epochs = to_i64(key, v, line);
    else if (key == "lr") p.lr = to_f64(key, v, line);
    else if (key == "warmup") p.warmup_steps = to_i64(key, v, line);
    else if (key == "batch") p.batch_size = to_i64(key, v, line);
    else if (key == "clip_norm") p.clip_norm = to_f64(key, v, line);
    else if (key == "time_epsilon") p.time_epsilon = to_f64(key, v, line);
    else if (key == "mix_fraction") p.mix_stage1_fraction = to_f64(key, v, line);
    else if (key == "trainable") p.trainable_partitions = to_name_set(v);
    else fail("unknown key '" + key + "' in [stage]", line);
}

void apply_schedule_key(RunConfig & c, const std::string & key, const std::string & v, int line) {
    if (key == "preset") c.schedule = dec::schedule_preset(v);
    else if (key == "answer_length") c.schedule.answer_length = to_i64(key, v, line);
    else if (key == "block_length") c.schedule.block_length = to_i64(key, v, line);
    else if (key == "steps") c.schedule.steps = to_i64(key, v, line);
    else if (key == "confidence") c.confidence = dec::confidence_from_name(v);
    else fail("unknown key '" + key + "' in [schedule]", line);
}

void apply_data_key(DataConfig & d, const std::string & key, const std::string & v, int line) {
    if (key == "train") d.train = v;
    else if (key == "val") d.val = v;
    else if (key == "mix") d.mix = v;
    else if (key == "benchmark") d.benchmark = v;
    else if (key == "corpus_dir") d.corpus_dir = v;
    else if (key == "n_stage1") d.n_stage1 = to_i64(key, v, line);
    else if (key == "n_caption") d.n_caption = to_i64(key, v, line);
    else if (key == "n_qa") d.n_qa = to_i64(key, v, line);
    else if (key == "n_benchmark") d.n_benchmark = to_i64(key, v, line);
    else if (key == "val_fraction") d.val_fraction = to_f64(key, v, line);
    else if (key == "rewrite_fraction") d.rewrite_fraction = to_f64(key, v, line);
    else fail("unknown key '" + key + "' in [data]", line);
}

void apply_top_key(RunConfig & c, const std::string & key, const std::string & v, int line) {
    if (key == "output_dir") c.output_dir = v;
    else if (key == "seed") c.seed = to_u64(key, v, line);
    else fail("unknown top-level key '" + key + "' (sections: model, stage, schedule, data)",
              line);
}

} // namespace

model::ModelConfig model_preset(const std::string & name) {
    const text::Vocab & vocab = toy::vocab();
    model::ModelConfig  m; // struct defaults are the desk-scale backbone
    m.vocab_size = int32_t(vocab.size());
    m.mask_id    = vocab.mask_id;
    m.end_id     = vocab.end_id;
    if (name == "desk") {
        m.acoustic.queries = 16; // short toy clips need no 64-vector summary
        return m;
    }
    if (name == "paper") {
        m.layers                     = 32;
        m.heads                      = 32;
        m.hidden                     = 4096;
        m.max_positions              = 4096;
        m.encoder.hidden             = 768; // the published small speech encoder
        m.encoder.layers             = 12;
        m.encoder.heads              = 12;
        m.encoder.intermediate_layer = 6;
        m.semantic.conv_hidden       = 768;
        m.semantic.proj_hidden       = 2048;
        m.acoustic.queries           = 64;
        m.acoustic.blocks            = 2;
        m.acoustic.heads             = 8;
        return m;
    }
    throw ConfigError("unknown model preset '" + name + "'; choices: desk, paper");
}

void DataConfig::validate() const {
    if (n_stage1 < 0 || n_caption < 0 || n_qa < 0 || n_benchmark < 0)
        throw ConfigError("[data] record counts must be non-negative");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw ConfigError("[data] val_fraction must be in [0, 1)");
    if (!(rewrite_fraction >= 0.0 && rewrite_fraction <= 1.0))
        throw ConfigError("[data] rewrite_fraction must be in [0, 1]");
}

RunConfig::RunConfig()
    : model(model_preset("desk")), stage(train::stage_plan_preset("stage1-desk")),
      schedule(dec::schedule_preset("mmsu")) {}

RunConfig parse_run_config(const std::string & text) {
    RunConfig         c;
    std::string       section; // empty = top level
    std::stringstream ss(text);
    std::string       raw;
    int               line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail("unterminated section header '" + s + "'", line);
            section = trim(s.substr(1, s.size() - 2));
            if (section != "model" && section != "stage" && section != "schedule" &&
                section != "data")
                fail("unknown section [" + section + "]", line);
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) fail("expected 'key = value', got '" + s + "'", line);
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key.empty()) fail("missing key before '='", line);
        if (section.empty()) apply_top_key(c, key, val, line);
        else if (section == "model") apply_model_key(c.model, key, val, line);
        else if (section == "stage") apply_stage_key(c.stage, key, val, line);
        else if (section == "schedule") apply_schedule_key(c, key, val, line);
        else apply_data_key(c.data, key, val, line);
    }
    c.model.validate();
    c.stage.validate();
    c.schedule =
        dec::make_schedule(c.schedule.answer_length, c.schedule.block_length, c.schedule.steps);
    c.data.validate();
    return c;
}

RunConfig read_run_config(const std::string & path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string render_run_config(const RunConfig & c) {
    std::ostringstream o;
    o << "# resolved run configuration\n";
    o << "output_dir = " << c.output_dir << "\n";
    o << "seed = " << c.seed << "\n\n";

    const model::ModelConfig & m = c.model;
    o << "[model]\n";
    o << "layers = " << m.layers << "\n";
    o << "heads = " << m.heads << "\n";
    o << "hidden = " << m.hidden << "\n";
    o << "max_positions = " << m.max_positions << "\n";
    o << "rotary_base = " << fmt_f64(m.rotary_base) << "\n";
    o << "norm_epsilon = " << fmt_f64(m.norm_epsilon) << "\n";
    o << "encoder_mels = " << m.encoder.n_mels << "\n";
    o << "encoder_hidden = " << m.encoder.hidden << "\n";
    o << "encoder_layers = " << m.encoder.layers << "\n";
    o << "encoder_heads = " << m.encoder.heads << "\n";
    o << "encoder_intermediate_layer = " << m.encoder.intermediate_layer << "\n";
    o << "encoder_frame_rate = " << fmt_f64(m.encoder.in_frame_rate) << "\n";
    o << "semantic_conv_hidden = " << m.semantic.conv_hidden << "\n";
    o << "semantic_kernel = " << m.semantic.kernel << "\n";
    o << "semantic_proj_hidden = " << m.semantic.proj_hidden << "\n";
    o << "acoustic_queries = " << m.acoustic.queries << "\n";
    o << "acoustic_blocks = " << m.acoustic.blocks << "\n";
    o << "acoustic_heads = " << m.acoustic.heads << "\n\n";

    const train::StagePlan & p = c.stage;
    o << "[stage]\n";
    o << "stage = " << p.stage << "\n";
    o << "epochs = " << p.epochs << "\n";
    o << "lr = " << fmt_f64(p.lr) << "\n";
    o << "warmup = " << p.warmup_steps << "\n";
    o << "batch = " << p.batch_size << "\n";
    o << "clip_norm = " << fmt_f64(p.clip_norm) << "\n";
    o << "time_epsilon = " << fmt_f64(p.time_epsilon) << "\n";
    o << "mix_fraction = " << fmt_f64(p.mix_stage1_fraction) << "\n";
    o << "trainable = ";
    bool first = true;
    for (const auto & name : p.trainable_partitions) {
        if (!first) o << ",";
        o << name;
        first = false;
    }
    o << "\n\n";

    o << "[schedule]\n";
    o << "answer_length = " << c.schedule.answer_length << "\n";
    o << "block_length = " << c.schedule.block_length << "\n";
    o << "steps = " << c.schedule.steps << "\n";
    o << "confidence = " << dec::confidence_name(c.confidence) << "\n\n";

    const DataConfig & d = c.data;
    o << "[data]\n";
    o << "train = " << d.train << "\n";
    o << "val = " << d.val << "\n";
    o << "mix = " << d.mix << "\n";
    o << "benchmark = " << d.benchmark << "\n";
    o << "corpus_dir = " << d.corpus_dir << "\n";
    o << "n_stage1 = " << d.n_stage1 << "\n";
    o << "n_caption = " << d.n_caption << "\n";
    o << "n_qa = " << d.n_qa << "\n";
    o << "n_benchmark = " << d.n_benchmark << "\n";
    o << "val_fraction = " << fmt_f64(d.val_fraction) << "\n";
    o << "rewrite_fraction = " << fmt_f64(d.rewrite_fraction) << "\n";
    return o.str();
}

std::string write_resolved_snapshot(const RunConfig & c) {
    if (c.output_dir.empty())
        throw ConfigError("output_dir must be set to write a resolved snapshot");
    namespace fs = std::filesystem;
    fs::create_directories(c.output_dir);
    fs::path    path = fs::path(c.output_dir) / "resolved.ini";
    fs::path    tmp  = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << render_run_config(c);
    }
    fs::rename(tmp, path);
    return path.string();
}

} // namespace dalm::cfg
