// Toy audio synthesis and the scripted analyzer that inverts it.
#include "dalm/toyaudio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dalm/errors.hpp"
#include "dalm/text.hpp"
#include "dalm/toyspec.hpp"

namespace dalm::toy {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Analyzer frame geometry; the window must be shorter than the token gap.
constexpr int64_t kFrameLen = 512; // 32 ms at 16 kHz
constexpr int64_t kFrameHop = 80;  // 5 ms
static_assert(double(kFrameLen) / kToySampleRate < kTokenGapS, "token gaps must contain a full analysis frame");

int require_grid_index(const std::array<const char *, 4> & grid, const std::string & value, const char * attr) {
    if (value == "unknown") return -1;
    int idx = grid_index(grid, value);
    if (idx < 0) throw InvalidInputError(std::string(attr) + " '" + value + "' is not on the toy grid");
    return idx;
}

void add_tone(std::vector<double> & s, double freq, double amp, double phase, int64_t lo, int64_t hi) {
    double w = 2.0 * kPi * freq / kToySampleRate;
    lo       = std::max<int64_t>(lo, 0);
    hi       = std::min<int64_t>(hi, int64_t(s.size()));
    for (int64_t i = lo; i < hi; ++i) s[size_t(i)] += amp * std::sin(w * double(i) + phase);
}

// Amplitude of the component at freq over [lo, hi), rectangular window.
double tone_amp(const std::vector<double> & s, double sample_rate, double freq, int64_t lo, int64_t hi) {
    double w = 2.0 * kPi * freq / sample_rate;
    double re = 0.0, im = 0.0;
    for (int64_t i = lo; i < hi; ++i) {
        re += s[size_t(i)] * std::cos(w * double(i));
        im += s[size_t(i)] * std::sin(w * double(i));
    }
    return 2.0 * std::hypot(re, im) / double(hi - lo);
}

// Hann-windowed variant for short frames; the window suppresses leakage from
// the voice tone into the nearby low marker slots.
double tone_amp_hann(const std::vector<double> & s, double sample_rate, double freq, int64_t lo, int64_t n) {
    double w = 2.0 * kPi * freq / sample_rate;
    double re = 0.0, im = 0.0, norm = 0.0;
    for (int64_t k = 0; k < n; ++k) {
        double h = 0.5 - 0.5 * std::cos(2.0 * kPi * double(k) / double(n));
        double x = s[size_t(lo + k)] * h;
        re += x * std::cos(w * double(lo + k));
        im += x * std::sin(w * double(lo + k));
        norm += h;
    }
    return 2.0 * std::hypot(re, im) / norm;
}

} // namespace

audio::Waveform synth_toy_audio(const forge::AudioMetadata & meta, Rng & rng) {
    if (!(meta.pitch_hz > 0.0)) throw InvalidInputError("synth needs pitch_hz > 0");
    if (!(meta.volume > 0.0) || meta.volume > 1.0) throw InvalidInputError("synth needs volume in (0, 1]");
    if (!(meta.speaking_speed > 0.0)) throw InvalidInputError("synth needs speaking_speed > 0");
    if (!(meta.duration_s > 0.0)) throw InvalidInputError("synth needs duration_s > 0");

    std::vector<std::string> words = text::split_words(meta.spoken_text);
    if (words.empty()) throw InvalidInputError("synth needs at least one spoken word");
    std::vector<int> word_idx;
    for (const std::string & w : words) {
        int idx = lexicon_index(w);
        if (idx < 0) throw InvalidInputError("spoken word '" + w + "' is not in the toy lexicon");
        word_idx.push_back(idx);
    }

    double span = 1.0 / meta.speaking_speed;
    if (meta.duration_s + 1e-9 < span * double(words.size()))
        throw InvalidInputError("duration " + std::to_string(meta.duration_s) + " s is too short for " +
                                std::to_string(words.size()) + " spoken tokens at " +
                                std::to_string(meta.speaking_speed) + " tokens/s");
    if (span <= kTokenGapS) throw InvalidInputError("speaking_speed leaves no room for the inter-token gap");

    int gender  = require_grid_index(kGenders, meta.gender, "gender");
    int age     = require_grid_index(kAges, meta.age, "age");
    int accent  = require_grid_index(kAccents, meta.accent, "accent");
    int emotion = require_grid_index(kEmotions, meta.emotion, "emotion");
    int intent  = require_grid_index(kIntents, meta.intent, "intent");

    std::vector<double> centers = audio::mel_filter_centers(80, kToySampleRate);

    audio::Waveform w;
    w.sample_rate = kToySampleRate;
    int64_t n     = std::llround(meta.duration_s * kToySampleRate);
    w.samples.assign(size_t(n), 0.0);

    auto phase = [&rng]() { return 2.0 * kPi * rng.u01(); };

    add_tone(w.samples, meta.pitch_hz, kVoiceAmp * meta.volume, phase(), 0, n);

    const std::array<std::pair<int, int>, 5> sig = {{{kGenderSlotBase, gender},
                                                     {kAgeSlotBase, age},
                                                     {kAccentSlotBase, accent},
                                                     {kEmotionSlotBase, emotion},
                                                     {kIntentSlotBase, intent}}};
    for (auto [base, value] : sig) {
        double p = phase(); // always drawn so unknowns do not shift the stream
        if (value >= 0) add_tone(w.samples, centers[size_t(base + 2 * value)], kSignatureAmp * meta.volume, p, 0, n);
    }

    for (size_t k = 0; k < word_idx.size(); ++k) {
        double  freq = centers[size_t(kMarkerSlotBase + 2 * word_idx[k])];
        int64_t lo   = std::llround(double(k) * span * kToySampleRate);
        int64_t hi   = std::llround((double(k + 1) * span - kTokenGapS) * kToySampleRate);
        add_tone(w.samples, freq, kMarkerAmp * meta.volume, phase(), lo, hi);
    }
    return w;
}

AnalyzedAttributes analyze_toy_audio(const audio::Waveform & w) {
    if (w.samples.empty()) throw InvalidInputError("cannot analyze an empty waveform");
    if (std::abs(w.sample_rate - kToySampleRate) > 1e-6)
        throw InvalidInputError("toy analyzer expects 16 kHz audio");

    std::vector<double> centers = audio::mel_filter_centers(80, kToySampleRate);
    int64_t             n       = int64_t(w.samples.size());
    AnalyzedAttributes  out;

    double pitch_amp = 0.0;
    for (int i = 0; i < 4; ++i) {
        double a = tone_amp(w.samples, w.sample_rate, kPitchesHz[size_t(i)], 0, n);
        if (a > pitch_amp) {
            pitch_amp       = a;
            out.pitch_class = i;
        }
    }
    double volume    = pitch_amp / kVoiceAmp;
    out.volume_level = nearest_index(kVolumes, volume);

    auto detect_signature = [&](int base) {
        int    best     = -1;
        double best_amp = 0.5 * kSignatureAmp * volume; // at least half the expected level
        for (int v = 0; v < 4; ++v) {
            double a = tone_amp(w.samples, w.sample_rate, centers[size_t(base + 2 * v)], 0, n);
            if (a > best_amp) {
                best_amp = a;
                best     = v;
            }
        }
        return best;
    };
    out.gender  = detect_signature(kGenderSlotBase);
    out.age     = detect_signature(kAgeSlotBase);
    out.accent  = detect_signature(kAccentSlotBase);
    out.emotion = detect_signature(kEmotionSlotBase);
    out.intent  = detect_signature(kIntentSlotBase);

    // Frame-wise marker detection, then tokens = maximal runs of one marker
    // separated by marker-free frames (the gaps guarantee at least one).
    double           threshold = 0.5 * kMarkerAmp * volume;
    std::vector<int> active;
    for (int64_t lo = 0; lo + kFrameLen <= n; lo += kFrameHop) {
        int    word     = -1;
        double best_amp = threshold;
        for (int k = 0; k < int(kLexicon.size()); ++k) {
            double freq = centers[size_t(kMarkerSlotBase + 2 * k)];
            double a    = tone_amp_hann(w.samples, w.sample_rate, freq, lo, kFrameLen);
            if (a > best_amp) {
                best_amp = a;
                word     = k;
            }
        }
        active.push_back(word);
    }

    constexpr int kMinRunFrames = 3;
    size_t        i             = 0;
    while (i < active.size()) {
        if (active[i] < 0) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < active.size() && active[j] == active[i]) ++j;
        if (j - i >= kMinRunFrames) out.word_indices.push_back(active[i]);
        i = j;
    }
    out.token_count = int(out.word_indices.size());

    if (out.token_count > 0) {
        double duration = double(n) / w.sample_rate;
        out.speed_class = nearest_index(kSpeedsTps, double(out.token_count) / duration);
    }
    return out;
}

} // namespace dalm::toy
