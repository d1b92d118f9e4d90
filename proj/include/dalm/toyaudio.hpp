#pragma once
// Parametric toy speech: every attribute of the metadata is written into the
// waveform at a known frequency slot so a scripted analyzer (and a trained
// model) can recover it.
//
// Layout, all frequencies taken from the mel filter centers at 16 kHz:
//   voice        sine at pitch_hz, amplitude 0.5 * volume, whole duration
//   word marker  slot 14 + 2*lexicon_index, amplitude 0.175 * volume,
//                one marker per spoken token, 50 ms silent gap between tokens
//   signatures   amplitude 0.06 * volume, whole duration, one slot per
//                categorical value: gender 40+2g, age 48+2a, accent 56+2c,
//                emotion 64+2e, intent 72+2i
//
// The gap is longer than the analyzer's 32 ms window so every token boundary
// yields at least one marker-free analysis frame.

#include <vector>

#include "dalm/audio.hpp"
#include "dalm/dataforge.hpp"
#include "dalm/rng.hpp"

namespace dalm::toy {

inline constexpr double kToySampleRate = 16000.0;
inline constexpr double kTokenGapS     = 0.05;
inline constexpr double kVoiceAmp      = 0.5;   // times volume
inline constexpr double kMarkerAmp     = 0.175; // times volume
inline constexpr double kSignatureAmp  = 0.06;  // times volume

inline constexpr int kMarkerSlotBase  = 14; // + 2 * lexicon index
inline constexpr int kGenderSlotBase  = 40; // + 2 * value index, and so on
inline constexpr int kAgeSlotBase     = 48;
inline constexpr int kAccentSlotBase  = 56;
inline constexpr int kEmotionSlotBase = 64;
inline constexpr int kIntentSlotBase  = 72;

// Deterministic in (metadata, rng state); the rng only draws tone phases.
audio::Waveform synth_toy_audio(const forge::AudioMetadata & meta, Rng & rng);

struct AnalyzedAttributes {
    int gender  = -1; // grid indices, -1 = not detected
    int age     = -1;
    int accent  = -1;
    int emotion = -1;
    int intent  = -1;
    int pitch_class  = -1;
    int volume_level = -1;
    int speed_class  = -1;
    int token_count  = 0;
    std::vector<int> word_indices; // lexicon indices in spoken order
};

// Scripted recovery of every grid attribute from a synthesized waveform.
AnalyzedAttributes analyze_toy_audio(const audio::Waveform & w);

} // namespace dalm::toy
