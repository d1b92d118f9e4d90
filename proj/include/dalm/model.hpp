#pragma once
// The mask predictor: a fully bidirectional pre-norm transformer (RMS norm,
// gated feedforward, rotary positions, no biases, untied embedding and output
// head) reading a continuous audio prefix followed by text tokens. Also the
// small frozen audio encoder and the two adapters that bridge it into the
// language model. Parameters live in a registry partitioned by component so
// freezing and hashing operate on whole partitions.

#include <cstdint>
#include <string>
#include <vector>

#include "dalm/diffusion.hpp"
#include "dalm/rng.hpp"
#include "dalm/tensor.hpp"

namespace dalm::model {

enum class Partition : uint8_t {
    backbone = 0,
    embeddings,
    semantic_adapter,
    acoustic_adapter,
    encoder,
};
inline constexpr int kPartitionCount = 5;
const char * partition_name(Partition p);
Partition    partition_from_name(const std::string & name);

struct EncoderConfig {
    int64_t n_mels             = 80;
    int64_t hidden             = 64;
    int64_t layers             = 2;
    int64_t heads              = 2;
    int64_t intermediate_layer = 1; // 0 = conv output, k = after block k
    double  in_frame_rate      = 100.0;
};

struct SemanticAdapterConfig {
    int64_t conv_hidden = 64;
    int     kernel      = 3;
    int64_t proj_hidden = 128;
};

struct AcousticAdapterConfig {
    int64_t queries = 64;
    int64_t blocks  = 2;
    int64_t heads   = 4;
};

struct ModelConfig {
    int64_t layers        = 4;
    int64_t heads         = 4;
    int64_t hidden        = 128;
    int32_t vocab_size    = 512;
    int32_t mask_id       = 0;
    int32_t end_id        = 1;
    int64_t max_positions = 320;
    double  rotary_base   = 10000.0;
    double  norm_epsilon  = 1e-5;

    EncoderConfig         encoder;
    SemanticAdapterConfig semantic;
    AcousticAdapterConfig acoustic;

    diff::VocabSpec vocab() const { return diff::VocabSpec(vocab_size, mask_id, end_id); }
    // Gated-FFN width: 8h/3 rounded up to a multiple of 16.
    static int64_t ffn_width(int64_t h) { return (8 * h / 3 + 15) / 16 * 16; }

    void validate() const; // throws ConfigError
};

struct Param {
    std::string name;
    Partition   part;
    ad::TPtr    t;
};

struct ParamRegistry {
    std::vector<Param> params; // in registration order, deterministic

    ad::TPtr add(Partition part, const std::string & name, const ad::TPtr & t);

    int64_t  count(Partition part) const;
    int64_t  count_all() const;
    // FNV-1a over the raw bytes of every tensor in the partition, in order.
    uint64_t hash(Partition part) const;
    void     set_trainable(Partition part, bool trainable);
    bool     trainable(Partition part) const;
    const Param * find(const std::string & name) const;
};

struct AttentionWeights {
    ad::TPtr wq, wk, wv, wo;
};

struct BlockWeights {
    ad::TPtr         attn_norm;
    AttentionWeights attn;
    ad::TPtr         ffn_norm, w_gate, w_up, w_down;
};

struct AcousticBlock {
    ad::TPtr         self_norm;
    AttentionWeights self_attn;
    ad::TPtr         cross_norm;
    ad::TPtr         cross_wq, cross_wk, cross_wv, cross_wo;
    ad::TPtr         ffn_norm, w_gate, w_up, w_down;
};

struct Encoded {
    ad::TPtr final_states; // [n_states x encoder hidden] at half the input rate
    ad::TPtr intermediate; // states captured at the configured layer
};

class MaskPredictor {
  public:
    ModelConfig   cfg;
    ParamRegistry reg;

    // embeddings
    ad::TPtr tok_emb; // [vocab x hidden]
    ad::TPtr lm_head; // [vocab x hidden], logits = h * lm_head^T
    // backbone
    std::vector<BlockWeights> blocks;
    ad::TPtr                  final_norm;
    // frozen audio encoder
    ad::TPtr                  enc_conv_w, enc_conv_b;
    std::vector<BlockWeights> enc_blocks;
    ad::TPtr                  enc_final_norm;
    // semantic adapter
    ad::TPtr sem_conv1_w, sem_conv1_b, sem_conv2_w, sem_conv2_b;
    ad::TPtr sem_lin1_w, sem_lin1_b, sem_lin2_w, sem_lin2_b;
    // acoustic adapter
    ad::TPtr                   aco_queries;
    std::vector<AcousticBlock> aco_blocks;

    static MaskPredictor build(const ModelConfig & cfg, Rng & rng);

    // mel frames [T x n_mels] at the configured input rate -> encoder states.
    Encoded encode(ad::Tape & tape, const ad::TPtr & mel, double frame_rate) const;

    // 50 Hz states -> [ceil(n/4) x hidden] semantic tokens (needs >= 4 states).
    ad::TPtr semantic_adapt(ad::Tape & tape, const ad::TPtr & final_states) const;

    // intermediate states -> exactly [queries x hidden] summary vectors.
    ad::TPtr acoustic_adapt(ad::Tape & tape, const ad::TPtr & intermediate) const;

    // [semantic ; acoustic] along the sequence axis, semantic first.
    ad::TPtr fuse_prefix(ad::Tape & tape, const ad::TPtr & semantic,
                         const ad::TPtr & acoustic) const;

    // Bidirectional forward. prefix may be null (text-only mode). Returns
    // logits for text positions [logits_begin, logits_end); prefix positions
    // never produce logits. Position indices run 0..P+L-1 with the prefix
    // occupying the leading indices.
    ad::TPtr forward(ad::Tape & tape, const ad::TPtr & prefix,
                     const std::vector<int32_t> & token_ids, int64_t logits_begin,
                     int64_t logits_end) const;

  private:
    ad::TPtr transformer_block(ad::Tape & tape, const BlockWeights & w, const ad::TPtr & x,
                               const std::vector<int32_t> & positions, int64_t heads) const;
    ad::TPtr attention(ad::Tape & tape, const ad::TPtr & q_in, const ad::TPtr & kv_in,
                       const AttentionWeights & w, int64_t heads,
                       const std::vector<int32_t> * q_pos,
                       const std::vector<int32_t> * k_pos) const;
    ad::TPtr swiglu_ffn(ad::Tape & tape, const ad::TPtr & x, const ad::TPtr & norm,
                        const ad::TPtr & gate, const ad::TPtr & up,
                        const ad::TPtr & down) const;
};

} // namespace dalm::model
