#include "dalm/model.hpp"

#include <cmath>

#include "dalm/errors.hpp"
#include "dalm/hashutil.hpp"

namespace dalm::model {

using ad::Tape;
using ad::TPtr;

const char * partition_name(Partition p) {
    switch (p) {
        case Partition::backbone: return "backbone";
        case Partition::embeddings: return "embeddings";
        case Partition::semantic_adapter: return "semantic_adapter";
        case Partition::acoustic_adapter: return "acoustic_adapter";
        case Partition::encoder: return "encoder";
    }
    throw ContractError("partition_name: bad partition");
}

Partition partition_from_name(const std::string & name) {
    for (int i = 0; i < kPartitionCount; ++i)
        if (name == partition_name(Partition(i))) return Partition(i);
    throw ConfigError("unknown parameter partition: " + name);
}

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("model layers must be >= 1");
    if (hidden < 1 || heads < 1) throw ConfigError("model hidden and heads must be >= 1");
    if (hidden % heads != 0)
        throw ConfigError("hidden (" + std::to_string(hidden) +
                          ") must be divisible by heads (" + std::to_string(heads) + ")");
    if (max_positions < 8) throw ConfigError("max_positions too small");
    if (!(rotary_base > 0.0)) throw ConfigError("rotary_base must be positive");
    if (!(norm_epsilon > 0.0)) throw ConfigError("norm_epsilon must be positive");
    (void)vocab(); // validates the triple

    if (encoder.n_mels < 1 || encoder.hidden < 1 || encoder.layers < 1)
        throw ConfigError("encoder dimensions must be >= 1");
    if (encoder.hidden % encoder.heads != 0)
        throw ConfigError("encoder hidden must be divisible by encoder heads");
    if (encoder.intermediate_layer < 0 || encoder.intermediate_layer > encoder.layers)
        throw ConfigError("encoder intermediate_layer must lie in [0, layers]");
    if (!(encoder.in_frame_rate > 0.0)) throw ConfigError("encoder frame rate must be positive");

    if (semantic.conv_hidden < 1 || semantic.proj_hidden < 1 || semantic.kernel < 1)
        throw ConfigError("semantic adapter dimensions must be >= 1");
    if (acoustic.queries < 1 || acoustic.blocks < 1)
        throw ConfigError("acoustic adapter needs >= 1 query and block");
    if (hidden % acoustic.heads != 0)
        throw ConfigError("hidden must be divisible by acoustic adapter heads");
}

TPtr ParamRegistry::add(Partition part, const std::string & name, const ad::TPtr & t) {
    if (find(name)) throw ContractError("duplicate parameter name: " + name);
    t->name = name;
    params.push_back({name, part, t});
    return t;
}

int64_t ParamRegistry::count(Partition part) const {
    int64_t n = 0;
    for (const Param & p : params)
        if (p.part == part) n += p.t->numel();
    return n;
}

int64_t ParamRegistry::count_all() const {
    int64_t n = 0;
    for (const Param & p : params) n += p.t->numel();
    return n;
}

uint64_t ParamRegistry::hash(Partition part) const {
    uint64_t h = kFnvOffset;
    for (const Param & p : params)
        if (p.part == part)
            h = fnv1a64(p.t->v.data(), p.t->v.size() * sizeof(double), h);
    return h;
}

void ParamRegistry::set_trainable(Partition part, bool trainable) {
    for (Param & p : params)
        if (p.part == part) p.t->needs_grad = trainable;
}

bool ParamRegistry::trainable(Partition part) const {
    for (const Param & p : params)
        if (p.part == part) return p.t->needs_grad;
    return false;
}

const Param * ParamRegistry::find(const std::string & name) const {
    for (const Param & p : params)
        if (p.name == name) return &p;
    return nullptr;
}

namespace {

// y = x * W convention: W is [fan_in x fan_out], initialized N(0, 1/sqrt(fan_in)).
TPtr mat(ParamRegistry & reg, Rng & rng, Partition part, const std::string & name,
         int64_t fan_in, int64_t fan_out, double extra_scale = 1.0) {
    return reg.add(part, name,
                   ad::randn(rng, fan_in, fan_out, extra_scale / std::sqrt(double(fan_in)),
                             false));
}

// Strided-conv weight: [c_out x kernel*c_in], fan-in is the patch size.
TPtr conv_mat(ParamRegistry & reg, Rng & rng, Partition part, const std::string & name,
              int64_t c_out, int64_t patch) {
    return reg.add(part, name,
                   ad::randn(rng, c_out, patch, 1.0 / std::sqrt(double(patch)), false));
}

TPtr ones_row(ParamRegistry & reg, Partition part, const std::string & name, int64_t n) {
    return reg.add(part, name, ad::full(1, n, 1.0, false));
}

TPtr zeros_row(ParamRegistry & reg, Partition part, const std::string & name, int64_t n) {
    return reg.add(part, name, ad::full(1, n, 0.0, false));
}

BlockWeights make_block(ParamRegistry & reg, Rng & rng, Partition part,
                        const std::string & prefix, int64_t h, int64_t n_layers) {
    const int64_t f     = ModelConfig::ffn_width(h);
    const double  depth = 1.0 / std::sqrt(2.0 * double(n_layers));
    BlockWeights  b;
    b.attn_norm = ones_row(reg, part, prefix + ".attn_norm", h);
    b.attn.wq   = mat(reg, rng, part, prefix + ".wq", h, h);
    b.attn.wk   = mat(reg, rng, part, prefix + ".wk", h, h);
    b.attn.wv   = mat(reg, rng, part, prefix + ".wv", h, h);
    b.attn.wo   = mat(reg, rng, part, prefix + ".wo", h, h, depth);
    b.ffn_norm  = ones_row(reg, part, prefix + ".ffn_norm", h);
    b.w_gate    = mat(reg, rng, part, prefix + ".w_gate", h, f);
    b.w_up      = mat(reg, rng, part, prefix + ".w_up", h, f);
    b.w_down    = mat(reg, rng, part, prefix + ".w_down", f, h, depth);
    return b;
}

std::vector<int32_t> iota_positions(int64_t n) {
    std::vector<int32_t> p(static_cast<size_t>(n), 0);
    for (int64_t i = 0; i < n; ++i) p[size_t(i)] = int32_t(i);
    return p;
}

} // namespace

MaskPredictor MaskPredictor::build(const ModelConfig & cfg, Rng & rng) {
    cfg.validate();
    MaskPredictor m;
    m.cfg = cfg;

    const int64_t h = cfg.hidden;
    const int64_t v = cfg.vocab_size;
    const int64_t e = cfg.encoder.hidden;

    // embeddings (untied input table and output head)
    m.tok_emb = m.reg.add(Partition::embeddings, "embeddings.tok_emb",
                          ad::randn(rng, v, h, 1.0, false));
    m.lm_head = mat(m.reg, rng, Partition::embeddings, "embeddings.lm_head", v, h);

    // backbone
    for (int64_t l = 0; l < cfg.layers; ++l)
        m.blocks.push_back(make_block(m.reg, rng, Partition::backbone,
                                      "backbone.layer" + std::to_string(l), h, cfg.layers));
    m.final_norm = ones_row(m.reg, Partition::backbone, "backbone.final_norm", h);

    // frozen audio encoder: strided conv then transformer blocks
    m.enc_conv_w = conv_mat(m.reg, rng, Partition::encoder, "encoder.conv_w", e,
                            3 * cfg.encoder.n_mels);
    m.enc_conv_b = zeros_row(m.reg, Partition::encoder, "encoder.conv_b", e);
    for (int64_t l = 0; l < cfg.encoder.layers; ++l)
        m.enc_blocks.push_back(make_block(m.reg, rng, Partition::encoder,
                                          "encoder.layer" + std::to_string(l), e,
                                          cfg.encoder.layers));
    m.enc_final_norm = ones_row(m.reg, Partition::encoder, "encoder.final_norm", e);

    // semantic adapter: two stride-2 convs then two linear layers
    const int64_t c = cfg.semantic.conv_hidden;
    const int64_t k = cfg.semantic.kernel;
    const int64_t p = cfg.semantic.proj_hidden;
    m.sem_conv1_w = conv_mat(m.reg, rng, Partition::semantic_adapter, "semantic.conv1_w", c, k * e);
    m.sem_conv1_b = zeros_row(m.reg, Partition::semantic_adapter, "semantic.conv1_b", c);
    m.sem_conv2_w = conv_mat(m.reg, rng, Partition::semantic_adapter, "semantic.conv2_w", c, k * c);
    m.sem_conv2_b = zeros_row(m.reg, Partition::semantic_adapter, "semantic.conv2_b", c);
    m.sem_lin1_w  = mat(m.reg, rng, Partition::semantic_adapter, "semantic.lin1_w", c, p);
    m.sem_lin1_b  = zeros_row(m.reg, Partition::semantic_adapter, "semantic.lin1_b", p);
    m.sem_lin2_w  = mat(m.reg, rng, Partition::semantic_adapter, "semantic.lin2_w", p, h);
    m.sem_lin2_b  = zeros_row(m.reg, Partition::semantic_adapter, "semantic.lin2_b", h);

    // acoustic adapter: learned queries and cross-attention blocks
    m.aco_queries = m.reg.add(Partition::acoustic_adapter, "acoustic.queries",
                              ad::randn(rng, cfg.acoustic.queries, h, 1.0, false));
    for (int64_t l = 0; l < cfg.acoustic.blocks; ++l) {
        const std::string pre   = "acoustic.block" + std::to_string(l);
        const double      depth = 1.0 / std::sqrt(2.0 * double(cfg.acoustic.blocks));
        const int64_t     f     = ModelConfig::ffn_width(h);
        AcousticBlock     b;
        b.self_norm    = ones_row(m.reg, Partition::acoustic_adapter, pre + ".self_norm", h);
        b.self_attn.wq = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".self_wq", h, h);
        b.self_attn.wk = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".self_wk", h, h);
        b.self_attn.wv = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".self_wv", h, h);
        b.self_attn.wo =
            mat(m.reg, rng, Partition::acoustic_adapter, pre + ".self_wo", h, h, depth);
        b.cross_norm = ones_row(m.reg, Partition::acoustic_adapter, pre + ".cross_norm", h);
        b.cross_wq   = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".cross_wq", h, h);
        b.cross_wk   = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".cross_wk", e, h);
        b.cross_wv   = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".cross_wv", e, h);
        b.cross_wo =
            mat(m.reg, rng, Partition::acoustic_adapter, pre + ".cross_wo", h, h, depth);
        b.ffn_norm = ones_row(m.reg, Partition::acoustic_adapter, pre + ".ffn_norm", h);
        b.w_gate   = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".w_gate", h, f);
        b.w_up     = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".w_up", h, f);
        b.w_down   = mat(m.reg, rng, Partition::acoustic_adapter, pre + ".w_down", f, h, depth);
        m.aco_blocks.push_back(b);
    }

    // Adapters are the only partitions that ever train.
    m.reg.set_trainable(Partition::semantic_adapter, true);
    m.reg.set_trainable(Partition::acoustic_adapter, true);
    return m;
}

TPtr MaskPredictor::attention(Tape & tape, const TPtr & q_in, const TPtr & kv_in,
                              const AttentionWeights & w, int64_t heads,
                              const std::vector<int32_t> * q_pos,
                              const std::vector<int32_t> * k_pos) const {
    const TPtr q = tape.matmul(q_in, w.wq);
    const TPtr k = tape.matmul(kv_in, w.wk);
    const TPtr v = tape.matmul(kv_in, w.wv);

    const int64_t dh = q->cols / heads;
    std::vector<TPtr> head_outs;
    for (int64_t hd = 0; hd < heads; ++hd) {
        TPtr qh = tape.slice_cols(q, hd * dh, (hd + 1) * dh);
        TPtr kh = tape.slice_cols(k, hd * dh, (hd + 1) * dh);
        TPtr vh = tape.slice_cols(v, hd * dh, (hd + 1) * dh);
        if (q_pos) qh = tape.rope(qh, *q_pos, cfg.rotary_base);
        if (k_pos) kh = tape.rope(kh, *k_pos, cfg.rotary_base);
        TPtr scores = tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
        TPtr probs  = tape.softmax_rows(scores);
        head_outs.push_back(tape.matmul(probs, vh));
    }
    return tape.matmul(tape.concat_cols(head_outs), w.wo);
}

TPtr MaskPredictor::swiglu_ffn(Tape & tape, const TPtr & x, const TPtr & norm,
                               const TPtr & gate, const TPtr & up, const TPtr & down) const {
    const TPtr xn = tape.rmsnorm(x, norm, cfg.norm_epsilon);
    return tape.matmul(tape.mul(tape.silu(tape.matmul(xn, gate)), tape.matmul(xn, up)), down);
}

TPtr MaskPredictor::transformer_block(Tape & tape, const BlockWeights & w, const TPtr & x,
                                      const std::vector<int32_t> & positions,
                                      int64_t heads) const {
    const TPtr xn = tape.rmsnorm(x, w.attn_norm, cfg.norm_epsilon);
    TPtr       h  = tape.add(x, attention(tape, xn, xn, w.attn, heads, &positions, &positions));
    return tape.add(h, swiglu_ffn(tape, h, w.ffn_norm, w.w_gate, w.w_up, w.w_down));
}

Encoded MaskPredictor::encode(Tape & tape, const TPtr & mel, double frame_rate) const {
    if (frame_rate != cfg.encoder.in_frame_rate)
        throw ConfigError("encoder expects " + std::to_string(cfg.encoder.in_frame_rate) +
                          " Hz features, got " + std::to_string(frame_rate));
    if (mel->cols != cfg.encoder.n_mels)
        throw ConfigError("encoder expects " + std::to_string(cfg.encoder.n_mels) +
                          " mel channels, got " + std::to_string(mel->cols));
    if (mel->rows < 1) throw InvalidInputError("encode: empty feature matrix");

    TPtr x = tape.gelu(tape.conv1d(mel, enc_conv_w, enc_conv_b, 3, 2));
    const std::vector<int32_t> positions = iota_positions(x->rows);

    Encoded out;
    if (cfg.encoder.intermediate_layer == 0) out.intermediate = x;
    for (size_t l = 0; l < enc_blocks.size(); ++l) {
        x = transformer_block(tape, enc_blocks[l], x, positions, cfg.encoder.heads);
        if (cfg.encoder.intermediate_layer == int64_t(l) + 1) out.intermediate = x;
    }
    out.final_states = tape.rmsnorm(x, enc_final_norm, cfg.norm_epsilon);
    return out;
}

TPtr MaskPredictor::semantic_adapt(Tape & tape, const TPtr & final_states) const {
    if (final_states->rows < 4)
        throw InvalidInputError("semantic_adapt: need at least 4 encoder states, got " +
                                std::to_string(final_states->rows));
    const int k = cfg.semantic.kernel;
    TPtr x = tape.gelu(tape.conv1d(final_states, sem_conv1_w, sem_conv1_b, k, 2));
    x      = tape.gelu(tape.conv1d(x, sem_conv2_w, sem_conv2_b, k, 2));
    x      = tape.gelu(tape.add_rowvec(tape.matmul(x, sem_lin1_w), sem_lin1_b));
    return tape.add_rowvec(tape.matmul(x, sem_lin2_w), sem_lin2_b);
}

TPtr MaskPredictor::acoustic_adapt(Tape & tape, const TPtr & intermediate) const {
    if (!intermediate || intermediate->rows < 1)
        throw InvalidInputError("acoustic_adapt: empty intermediate states");

    TPtr q = aco_queries;
    for (const AcousticBlock & b : aco_blocks) {
        TPtr qn = tape.rmsnorm(q, b.self_norm, cfg.norm_epsilon);
        q = tape.add(q, attention(tape, qn, qn, b.self_attn, cfg.acoustic.heads,
                                  nullptr, nullptr));
        qn = tape.rmsnorm(q, b.cross_norm, cfg.norm_epsilon);
        AttentionWeights cross{b.cross_wq, b.cross_wk, b.cross_wv, b.cross_wo};
        q = tape.add(q, attention(tape, qn, intermediate, cross, cfg.acoustic.heads,
                                  nullptr, nullptr));
        q = tape.add(q, swiglu_ffn(tape, q, b.ffn_norm, b.w_gate, b.w_up, b.w_down));
    }
    return q;
}

TPtr MaskPredictor::fuse_prefix(Tape & tape, const TPtr & semantic,
                                const TPtr & acoustic) const {
    if (!semantic || !acoustic || semantic->rows < 1 || acoustic->rows < 1)
        throw InvalidInputError("fuse_prefix: both adapter outputs are required");
    return tape.concat_rows({semantic, acoustic});
}

TPtr MaskPredictor::forward(Tape & tape, const TPtr & prefix,
                            const std::vector<int32_t> & token_ids, int64_t logits_begin,
                            int64_t logits_end) const {
    const int64_t P = prefix ? prefix->rows : 0;
    const int64_t L = int64_t(token_ids.size());
    if (L < 1) throw InvalidInputError("forward: empty token sequence");
    if (P + L > cfg.max_positions)
        throw InvalidInputError("forward: sequence length " + std::to_string(P + L) +
                                " exceeds max_positions " + std::to_string(cfg.max_positions));
    if (logits_begin < 0 || logits_begin >= logits_end || logits_end > L)
        throw InvalidInputError("forward: bad logits window");
    if (prefix && prefix->cols != cfg.hidden)
        throw InvalidInputError("forward: prefix width does not match hidden size");

    TPtr x = tape.embed(tok_emb, token_ids);
    if (prefix) x = tape.concat_rows({prefix, x});

    const std::vector<int32_t> positions = iota_positions(P + L);
    for (const BlockWeights & b : blocks)
        x = transformer_block(tape, b, x, positions, cfg.heads);
    x = tape.rmsnorm(x, final_norm, cfg.norm_epsilon);

    return tape.matmul_nt(tape.slice_rows(x, P + logits_begin, P + logits_end), lm_head);
}

} // namespace dalm::model
