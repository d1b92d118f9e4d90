#pragma once
// Waveform handling: WAV input and output, the short-time log-mel frontend,
// and a binary feature file.
//
// Feature file byte layout (little-endian):
//   bytes 0..3   magic "DLMF"
//   bytes 4..7   uint32 version (currently 1)
//   bytes 8..15  int64  n_frames
//   bytes 16..23 int64  n_mels
//   bytes 24..31 float64 frame_rate in Hz
//   bytes 32..   float64 frames, row-major [n_frames x n_mels]

#include <cstdint>
#include <string>
#include <vector>

#include "dalm/tensor.hpp"

namespace dalm::audio {

struct Waveform {
    std::vector<double> samples; // mono, nominally in [-1, 1]
    double              sample_rate = 16000.0;
};

struct MelConfig {
    int64_t n_mels       = 80;
    double  window_ms    = 25.0;
    double  hop_ms       = 10.0;
    double  floor_energy = 1e-10; // added before the log
};

struct AudioFeatures {
    ad::TPtr frames; // [n_frames x n_mels]
    double   frame_rate = 0.0;
    int64_t  n_mels     = 0;
};

// In-place iterative radix-2 transform; size must be a power of two.
void fft_radix2(std::vector<double> & re, std::vector<double> & im);

// Center frequencies (Hz) of the triangular mel filters spanning 0..Nyquist.
std::vector<double> mel_filter_centers(int64_t n_mels, double sample_rate);

// Hann-windowed short-time power spectra folded through the mel filterbank,
// then log(energy + floor). frame_rate = 1000 / hop_ms.
AudioFeatures log_mel(const Waveform & w, const MelConfig & cfg);

// Mono 16-bit PCM or 32-bit float WAV.
Waveform read_wav(const std::string & path);
void     write_wav(const std::string & path, const Waveform & w, bool float_format = false);

void          write_features(const std::string & path, const AudioFeatures & f);
AudioFeatures read_features(const std::string & path);

} // namespace dalm::audio
