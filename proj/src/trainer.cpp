// Two-stage trainer, Adam, and versioned checkpoints.
#include "dalm/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dalm/audio.hpp"
#include "dalm/diffusion.hpp"
#include "dalm/errors.hpp"
#include "dalm/hashutil.hpp"

namespace dalm::train {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");

const std::set<std::string> kNeverTrainable = {"backbone", "embeddings", "encoder"};

} // namespace

void adam_update(std::vector<double> & p, const std::vector<double> & g, std::vector<double> & m,
                 std::vector<double> & v, int64_t t, double lr, const AdamConfig & cfg) {
    double c1 = 1.0 - std::pow(cfg.beta1, double(t));
    double c2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
}

std::set<std::string> StagePlan::resolved_trainable() const {
    if (!trainable_partitions.empty()) {
        for (const std::string & name : trainable_partitions) {
            model::partition_from_name(name); // throws ConfigError on unknown
            if (kNeverTrainable.count(name))
                throw ConfigError("plan: partition '" + name + "' is frozen by contract");
        }
        return trainable_partitions;
    }
    if (stage == 1) return {"semantic_adapter"};
    return {"semantic_adapter", "acoustic_adapter"};
}

void StagePlan::validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("plan: stage must be 1 or 2");
    if (epochs < 1) throw ConfigError("plan: epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("plan: lr must be > 0");
    if (warmup_steps < 0) throw ConfigError("plan: warmup_steps must be >= 0");
    if (batch_size < 1) throw ConfigError("plan: batch_size must be >= 1");
    if (!(clip_norm > 0.0)) throw ConfigError("plan: clip_norm must be > 0");
    if (!(time_epsilon > 0.0) || time_epsilon >= 1.0)
        throw ConfigError("plan: time_epsilon must be in (0, 1)");
    if (mix_stage1_fraction < 0.0 || mix_stage1_fraction > 1.0)
        throw ConfigError("plan: mix_stage1_fraction must be in [0, 1]");
    if (stage == 1 && mix_stage1_fraction != 0.0)
        throw ConfigError("plan: mix_stage1_fraction only applies to stage 2");
    resolved_trainable();
}

StagePlan stage_plan_preset(const std::string & name) {
    StagePlan p;
    if (name == "stage1-paper") {
        p.stage        = 1;
        p.epochs       = 10;
        p.lr           = 1e-4;
        p.warmup_steps = 1000;
        p.batch_size   = 128;
    } else if (name == "stage2-paper") {
        p.stage        = 2;
        p.epochs       = 10;
        p.lr           = 5e-5;
        p.warmup_steps = 2000;
        p.batch_size   = 32;
    } else if (name == "stage1-desk") {
        p.stage        = 1;
        p.epochs       = 200;
        p.lr           = 2e-3;
        p.warmup_steps = 50;
        p.batch_size   = 8;
    } else if (name == "stage2-desk") {
        p.stage        = 2;
        p.epochs       = 40;
        p.lr           = 2e-3;
        p.warmup_steps = 100;
        p.batch_size   = 16;
    } else {
        throw ConfigError("unknown stage plan preset '" + name +
                          "'; known presets: stage1-paper, stage2-paper, stage1-desk, stage2-desk");
    }
    return p;
}

Trainer::Trainer(model::MaskPredictor & m, const StagePlan & plan, const text::Vocab & vocab)
    : m_(m), plan_(plan), vocab_(vocab), rng_(plan.seed) {
    plan_.validate();
    std::set<std::string> on = plan_.resolved_trainable();
    for (int p = 0; p < model::kPartitionCount; ++p) {
        model::Partition part = model::Partition(p);
        m_.reg.set_trainable(part, on.count(model::partition_name(part)) > 0);
    }
    opt_.m.resize(m_.reg.params.size());
    opt_.v.resize(m_.reg.params.size());
    for (size_t i = 0; i < m_.reg.params.size(); ++i) {
        size_t n = size_t(m_.reg.params[i].t->numel());
        opt_.m[i].assign(n, 0.0);
        opt_.v[i].assign(n, 0.0);
    }
}

text::TokenSequence Trainer::build_example(const text::Vocab & vocab,
                                           const forge::DatasetRecord & rec) {
    text::TokenSequence seq;
    seq.append(vocab.encode(rec.question), text::Role::prompt);
    std::vector<int32_t> resp = vocab.encode(rec.answer);
    resp.push_back(vocab.end_id);
    while (resp.size() < 4 || resp.size() % 4 != 0) resp.push_back(vocab.end_id);
    seq.append(resp, text::Role::response);
    return seq;
}

const pipe::EncodedAudio & Trainer::encoded(const std::string & audio_path) {
    auto it = enc_cache_.find(audio_path);
    if (it != enc_cache_.end()) return it->second;
    pipe::EncodedAudio enc = pipe::encode_waveform(m_, audio::read_wav(audio_path));
    return enc_cache_.emplace(audio_path, std::move(enc)).first->second;
}

double Trainer::lr_at(int64_t step) const {
    if (plan_.warmup_steps <= 0) return plan_.lr;
    double ramp = double(step + 1) / double(plan_.warmup_steps);
    return plan_.lr * std::min(1.0, ramp);
}

void Trainer::apply_grads(bool & clipped) {
    double sq = 0.0;
    for (const model::Param & p : m_.reg.params) {
        if (!m_.reg.trainable(p.part) || p.t->g.empty()) continue;
        for (double g : p.t->g) sq += g * g;
    }
    double norm = std::sqrt(sq);
    clipped     = norm > plan_.clip_norm;
    double mul  = clipped ? plan_.clip_norm / norm : 1.0;

    ++opt_.step;
    double lr = lr_at(opt_.step - 1);
    for (size_t i = 0; i < m_.reg.params.size(); ++i) {
        const model::Param & p = m_.reg.params[i];
        if (!m_.reg.trainable(p.part) || p.t->g.empty()) continue;
        if (mul != 1.0)
            for (double & g : p.t->g) g *= mul;
        adam_update(p.t->v, p.t->g, opt_.m[i], opt_.v[i], opt_.step, lr, adam_);
    }
    for (const model::Param & p : m_.reg.params) p.t->zero_grad();
}

void Trainer::dump_and_abort(const std::vector<forge::DatasetRecord> & batch,
                             const std::vector<double> & times, double loss) {
    nlohmann::json j;
    j["step"]    = opt_.step;
    j["loss"]    = std::isnan(loss) ? "nan" : "inf";
    j["records"] = nlohmann::json::array();
    for (size_t i = 0; i < batch.size(); ++i) {
        j["records"].push_back({{"audio", batch[i].audio},
                                {"question", batch[i].question},
                                {"answer", batch[i].answer},
                                {"mask_time", i < times.size() ? times[i] : 0.0}});
    }
    namespace fs = std::filesystem;
    fs::path      path = fs::temp_directory_path() / "dalm_diverged_batch.json";
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    throw IntegrityError("training diverged: loss is not finite at step " +
                         std::to_string(opt_.step + 1) + "; offending batch dumped to " +
                         path.string());
}

StepMetrics Trainer::train_batch(const std::vector<forge::DatasetRecord> & batch) {
    if (batch.empty()) throw InvalidInputError("train_batch: empty batch");

    ad::Tape              tape(true);
    std::vector<ad::TPtr> losses;
    std::vector<double>   times;
    int64_t               hits = 0, masked_total = 0;

    for (const forge::DatasetRecord & rec : batch) {
        ad::TPtr prefix;
        if (!rec.audio.empty()) prefix = pipe::prefix_from_encoded(tape, m_, encoded(rec.audio));

        text::TokenSequence clean = build_example(vocab_, rec);
        int64_t prefix_rows = prefix ? prefix->rows : 0;
        if (prefix_rows + int64_t(clean.size()) > m_.cfg.max_positions)
            throw InvalidInputError("record '" + rec.audio + "' needs " +
                                    std::to_string(prefix_rows + clean.size()) +
                                    " positions, model allows " +
                                    std::to_string(m_.cfg.max_positions));

        diff::DiffusionTime t  = diff::sample_time(rng_, plan_.time_epsilon);
        diff::MaskedExample ex = diff::forward_mask(clean, t, rng_, m_.cfg.mask_id);
        times.push_back(t.t);

        int64_t  resp_begin = clean.first_role_index(text::Role::response);
        ad::TPtr logits = m_.forward(tape, prefix, ex.corrupted.ids, resp_begin,
                                     int64_t(clean.size()));
        losses.push_back(diff::masked_loss(tape, logits, ex, resp_begin));
        hits += diff::masked_argmax_hits(logits, ex, resp_begin);
        for (uint8_t b : ex.mask) masked_total += b ? 1 : 0;
    }

    ad::TPtr loss = tape.mean_scalars(losses);
    if (!std::isfinite(loss->v[0])) dump_and_abort(batch, times, loss->v[0]);
    tape.backward(loss);

    bool clipped = false;
    apply_grads(clipped); // increments opt_.step

    StepMetrics sm;
    sm.step       = opt_.step;
    sm.loss       = loss->v[0];
    sm.lr         = lr_at(opt_.step - 1);
    sm.masked_acc = masked_total > 0 ? double(hits) / double(masked_total) : 1.0;
    sm.clipped    = clipped;
    return sm;
}

TrainResult Trainer::run(const std::vector<forge::DatasetRecord> & dataset,
                         const std::string &                       metrics_path,
                         const std::vector<forge::DatasetRecord> & mix_source) {
    if (dataset.empty()) throw InvalidInputError("train: dataset is empty");

    std::ofstream metrics;
    if (!metrics_path.empty()) {
        namespace fs = std::filesystem;
        fs::path p(metrics_path);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        metrics.open(metrics_path, std::ios::app);
        if (!metrics) throw IoError("cannot open metrics file '" + metrics_path + "'");
    }

    TrainResult result;
    for (int64_t epoch = 0; epoch < plan_.epochs; ++epoch) {
        std::vector<forge::DatasetRecord> epoch_data = dataset;
        if (plan_.mix_stage1_fraction > 0.0 && !mix_source.empty()) {
            int64_t extra = std::llround(plan_.mix_stage1_fraction * double(dataset.size()));
            Rng     pick  = rng_.fork("mix" + std::to_string(epoch));
            for (int64_t i = 0; i < extra; ++i)
                epoch_data.push_back(mix_source[pick.below(mix_source.size())]);
        }
        for (size_t i = epoch_data.size(); i > 1; --i)
            std::swap(epoch_data[i - 1], epoch_data[rng_.below(i)]);

        for (size_t lo = 0; lo < epoch_data.size(); lo += size_t(plan_.batch_size)) {
            size_t hi = std::min(epoch_data.size(), lo + size_t(plan_.batch_size));
            std::vector<forge::DatasetRecord> batch(epoch_data.begin() + long(lo),
                                                    epoch_data.begin() + long(hi));
            StepMetrics sm = train_batch(batch);
            if (metrics.is_open()) {
                nlohmann::json j;
                j["step"]       = sm.step;
                j["loss"]       = sm.loss;
                j["lr"]         = sm.lr;
                j["masked_acc"] = sm.masked_acc;
                j["clipped"]    = sm.clipped;
                metrics << j.dump() << "\n";
                metrics.flush();
            }
            result.metrics.push_back(sm);
        }
    }
    result.steps      = int64_t(result.metrics.size());
    result.final_loss = result.metrics.empty() ? 0.0 : result.metrics.back().loss;
    return result;
}

// ---- checkpoint container ----

namespace {

constexpr char     kMagic[4]  = {'D', 'L', 'M', 'C'};
constexpr uint32_t kCkptVersion = 1;

void put_bytes(std::string & buf, const void * p, size_t n) {
    buf.append(static_cast<const char *>(p), n);
}
template <typename T> void put(std::string & buf, T v) { put_bytes(buf, &v, sizeof(T)); }
void put_str(std::string & buf, const std::string & s) {
    put<uint32_t>(buf, uint32_t(s.size()));
    put_bytes(buf, s.data(), s.size());
}

struct Reader {
    const std::string & buf;
    size_t              pos = 0;
    explicit Reader(const std::string & b) : buf(b) {}
    const char * need(size_t n) {
        if (pos + n > buf.size()) throw IntegrityError("checkpoint truncated");
        const char * p = buf.data() + pos;
        pos += n;
        return p;
    }
    template <typename T> T get() {
        T v;
        std::memcpy(&v, need(sizeof(T)), sizeof(T));
        return v;
    }
    std::string get_str() {
        uint32_t n = get<uint32_t>();
        if (n > (1u << 20)) throw IntegrityError("checkpoint string length implausible");
        return std::string(need(n), n);
    }
};

std::string config_bytes(const model::ModelConfig & c) {
    std::string b;
    put<int64_t>(b, c.layers);
    put<int64_t>(b, c.heads);
    put<int64_t>(b, c.hidden);
    put<int32_t>(b, c.vocab_size);
    put<int32_t>(b, c.mask_id);
    put<int32_t>(b, c.end_id);
    put<int64_t>(b, c.max_positions);
    put<double>(b, c.rotary_base);
    put<double>(b, c.norm_epsilon);
    put<int64_t>(b, c.encoder.n_mels);
    put<int64_t>(b, c.encoder.hidden);
    put<int64_t>(b, c.encoder.layers);
    put<int64_t>(b, c.encoder.heads);
    put<int64_t>(b, c.encoder.intermediate_layer);
    put<double>(b, c.encoder.in_frame_rate);
    put<int64_t>(b, c.semantic.conv_hidden);
    put<int32_t>(b, int32_t(c.semantic.kernel));
    put<int64_t>(b, c.semantic.proj_hidden);
    put<int64_t>(b, c.acoustic.queries);
    put<int64_t>(b, c.acoustic.blocks);
    put<int64_t>(b, c.acoustic.heads);
    return b;
}

model::ModelConfig config_from(Reader & r) {
    model::ModelConfig c;
    c.layers                     = r.get<int64_t>();
    c.heads                      = r.get<int64_t>();
    c.hidden                     = r.get<int64_t>();
    c.vocab_size                 = r.get<int32_t>();
    c.mask_id                    = r.get<int32_t>();
    c.end_id                     = r.get<int32_t>();
    c.max_positions              = r.get<int64_t>();
    c.rotary_base                = r.get<double>();
    c.norm_epsilon               = r.get<double>();
    c.encoder.n_mels             = r.get<int64_t>();
    c.encoder.hidden             = r.get<int64_t>();
    c.encoder.layers             = r.get<int64_t>();
    c.encoder.heads              = r.get<int64_t>();
    c.encoder.intermediate_layer = r.get<int64_t>();
    c.encoder.in_frame_rate      = r.get<double>();
    c.semantic.conv_hidden       = r.get<int64_t>();
    c.semantic.kernel            = int(r.get<int32_t>());
    c.semantic.proj_hidden       = r.get<int64_t>();
    c.acoustic.queries           = r.get<int64_t>();
    c.acoustic.blocks            = r.get<int64_t>();
    c.acoustic.heads             = r.get<int64_t>();
    return c;
}

} // namespace

uint64_t config_hash(const model::ModelConfig & cfg) {
    std::string b = config_bytes(cfg);
    return fnv1a64(b.data(), b.size());
}

void save_checkpoint(const std::string & path, const model::MaskPredictor & m,
                     const AdamState * opt, const Rng * rng, int64_t step) {
    std::string payload;
    std::string cfg = config_bytes(m.cfg);
    put_str(payload, cfg);
    put<uint64_t>(payload, fnv1a64(cfg.data(), cfg.size()));
    put<int64_t>(payload, step);
    put_str(payload, rng ? rng->save_state() : std::string());

    put<int64_t>(payload, int64_t(m.reg.params.size()));
    for (const model::Param & p : m.reg.params) {
        put_str(payload, p.name);
        put<uint8_t>(payload, uint8_t(p.part));
        put<int64_t>(payload, p.t->rows);
        put<int64_t>(payload, p.t->cols);
        put_bytes(payload, p.t->v.data(), p.t->v.size() * sizeof(double));
    }

    put<uint8_t>(payload, opt ? 1 : 0);
    if (opt) {
        if (opt->m.size() != m.reg.params.size() || opt->v.size() != m.reg.params.size())
            throw ContractError("optimizer state does not match the parameter registry");
        put<int64_t>(payload, opt->step);
        for (size_t i = 0; i < m.reg.params.size(); ++i) {
            put<int64_t>(payload, int64_t(opt->m[i].size()));
            put_bytes(payload, opt->m[i].data(), opt->m[i].size() * sizeof(double));
            put_bytes(payload, opt->v[i].data(), opt->v[i].size() * sizeof(double));
        }
    }

    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path      tmp = target.string() + ".tmp";
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(kMagic, 4);
    uint32_t version = kCkptVersion;
    out.write(reinterpret_cast<const char *>(&version), 4);
    out.write(payload.data(), std::streamsize(payload.size()));
    uint32_t crc = crc32(payload.data(), payload.size());
    out.write(reinterpret_cast<const char *>(&crc), 4);
    out.close();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    fs::rename(tmp, target);
}

LoadedCheckpoint load_checkpoint(const std::string & path, const model::ModelConfig * expect) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (file.size() < 12) throw IntegrityError("checkpoint truncated");
    if (std::memcmp(file.data(), kMagic, 4) != 0)
        throw IntegrityError("not a checkpoint file (bad magic)");
    uint32_t version = 0;
    std::memcpy(&version, file.data() + 4, 4);
    if (version != kCkptVersion)
        throw IntegrityError("checkpoint format_version " + std::to_string(version) +
                             " unsupported; expected " + std::to_string(kCkptVersion));

    std::string payload = file.substr(8, file.size() - 12);
    uint32_t    stored_crc = 0;
    std::memcpy(&stored_crc, file.data() + file.size() - 4, 4);
    if (crc32(payload.data(), payload.size()) != stored_crc)
        throw IntegrityError("checkpoint checksum mismatch; file is corrupt or truncated");

    Reader r(payload);
    std::string cfg_bytes = r.get_str();
    uint64_t    cfg_hash  = r.get<uint64_t>();
    if (fnv1a64(cfg_bytes.data(), cfg_bytes.size()) != cfg_hash)
        throw IntegrityError("checkpoint config hash mismatch");
    Reader             cr(cfg_bytes);
    model::ModelConfig cfg = config_from(cr);
    if (expect && config_hash(*expect) != cfg_hash)
        throw ConfigError("checkpoint was written for a different model config");

    LoadedCheckpoint lc;
    lc.step = r.get<int64_t>();
    std::string rng_state = r.get_str();
    if (!rng_state.empty()) lc.rng.load_state(rng_state);

    Rng build_rng(0);
    lc.model = model::MaskPredictor::build(cfg, build_rng);

    int64_t n_params = r.get<int64_t>();
    if (n_params != int64_t(lc.model.reg.params.size()))
        throw IntegrityError("checkpoint parameter count " + std::to_string(n_params) +
                             " does not match the model's " +
                             std::to_string(lc.model.reg.params.size()));
    for (int64_t i = 0; i < n_params; ++i) {
        std::string name = r.get_str();
        uint8_t     part = r.get<uint8_t>();
        int64_t     rows = r.get<int64_t>();
        int64_t     cols = r.get<int64_t>();
        const model::Param & p = lc.model.reg.params[size_t(i)];
        if (p.name != name || uint8_t(p.part) != part || p.t->rows != rows || p.t->cols != cols)
            throw IntegrityError("checkpoint parameter '" + name +
                                 "' does not match the model layout");
        const char * data = r.need(size_t(rows) * size_t(cols) * sizeof(double));
        std::memcpy(p.t->v.data(), data, size_t(rows) * size_t(cols) * sizeof(double));
    }

    lc.has_opt = r.get<uint8_t>() != 0;
    if (lc.has_opt) {
        lc.opt.step = r.get<int64_t>();
        lc.opt.m.resize(size_t(n_params));
        lc.opt.v.resize(size_t(n_params));
        for (int64_t i = 0; i < n_params; ++i) {
            int64_t n = r.get<int64_t>();
            if (n != lc.model.reg.params[size_t(i)].t->numel())
                throw IntegrityError("checkpoint optimizer state does not match parameters");
            lc.opt.m[size_t(i)].resize(size_t(n));
            std::memcpy(lc.opt.m[size_t(i)].data(), r.need(size_t(n) * sizeof(double)),
                        size_t(n) * sizeof(double));
            lc.opt.v[size_t(i)].resize(size_t(n));
            std::memcpy(lc.opt.v[size_t(i)].data(), r.need(size_t(n) * sizeof(double)),
                        size_t(n) * sizeof(double));
        }
    }
    if (r.pos != payload.size()) throw IntegrityError("checkpoint has trailing bytes");
    return lc;
}

} // namespace dalm::train
