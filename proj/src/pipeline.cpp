// Audio-to-prefix plumbing.
#include "dalm/pipeline.hpp"

namespace dalm::pipe {
namespace {

ad::TPtr detach(const ad::TPtr & t) {
    ad::TPtr out = ad::make_tensor(t->rows, t->cols, false);
    out->v       = t->v;
    return out;
}

} // namespace

audio::MelConfig mel_config_for(const model::ModelConfig & cfg) {
    audio::MelConfig mel;
    mel.n_mels = cfg.encoder.n_mels;
    mel.hop_ms = 1000.0 / cfg.encoder.in_frame_rate;
    return mel;
}

EncodedAudio encode_features(const model::MaskPredictor & m, const audio::AudioFeatures & f) {
    ad::Tape       tape(false);
    model::Encoded enc = m.encode(tape, f.frames, f.frame_rate);
    return EncodedAudio{detach(enc.final_states), detach(enc.intermediate)};
}

EncodedAudio encode_waveform(const model::MaskPredictor & m, const audio::Waveform & w) {
    return encode_features(m, audio::log_mel(w, mel_config_for(m.cfg)));
}

ad::TPtr prefix_from_encoded(ad::Tape & tape, const model::MaskPredictor & m,
                             const EncodedAudio & enc) {
    ad::TPtr semantic = m.semantic_adapt(tape, enc.final_states);
    ad::TPtr acoustic = m.acoustic_adapt(tape, enc.intermediate);
    return m.fuse_prefix(tape, semantic, acoustic);
}

ad::TPtr prefix_from_waveform(ad::Tape & tape, const model::MaskPredictor & m,
                              const audio::Waveform & w) {
    return prefix_from_encoded(tape, m, encode_waveform(m, w));
}

} // namespace dalm::pipe
