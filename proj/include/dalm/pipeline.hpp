#pragma once
// Waveform-to-prefix plumbing shared by training, evaluation, and the CLI:
// mel extraction, the frozen encoder pass, and the trainable adapter pass.

#include "dalm/audio.hpp"
#include "dalm/model.hpp"
#include "dalm/tensor.hpp"

namespace dalm::pipe {

// Mel settings matching the model's encoder input contract.
audio::MelConfig mel_config_for(const model::ModelConfig & cfg);

// Encoder outputs detached into plain constants. The encoder is frozen, so
// these are safe to cache and reuse across training steps and epochs.
struct EncodedAudio {
    ad::TPtr final_states;
    ad::TPtr intermediate;
};

EncodedAudio encode_features(const model::MaskPredictor & m, const audio::AudioFeatures & f);
EncodedAudio encode_waveform(const model::MaskPredictor & m, const audio::Waveform & w);

// Adapter passes recorded on the caller's tape (these do train).
ad::TPtr prefix_from_encoded(ad::Tape & tape, const model::MaskPredictor & m,
                             const EncodedAudio & enc);
ad::TPtr prefix_from_waveform(ad::Tape & tape, const model::MaskPredictor & m,
                              const audio::Waveform & w);

} // namespace dalm::pipe
