// WAV I/O, radix-2 FFT, log-mel features, binary feature files.
#include "dalm/audio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dalm/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and written with raw stores");

namespace dalm::audio {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_mels + 2 edge points, mel-equally spaced from 0 Hz to Nyquist.
std::vector<double> mel_points(int64_t n_mels, double sample_rate) {
    const double        top = hz_to_mel(sample_rate / 2.0);
    std::vector<double> pts(size_t(n_mels) + 2);
    for (size_t i = 0; i < pts.size(); ++i)
        pts[i] = mel_to_hz(top * double(i) / double(n_mels + 1));
    return pts;
}

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

template <typename T> void put(std::ostream & os, T v) {
    os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T> T get(std::istream & is, const char * what) {
    T v{};
    if (!is.read(reinterpret_cast<char *>(&v), sizeof(T)))
        throw IntegrityError(std::string("truncated file while reading ") + what);
    return v;
}

} // namespace

void fft_radix2(std::vector<double> & re, std::vector<double> & im) {
    const size_t n = re.size();
    if (n != im.size() || n == 0 || (n & (n - 1)) != 0)
        throw InvalidInputError("fft_radix2: size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / double(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                const double ur = re[i + k], ui = im[i + k];
                const double xr = re[i + k + len / 2], xi = im[i + k + len / 2];
                const double vr = xr * cr - xi * ci;
                const double vi = xr * ci + xi * cr;
                re[i + k]           = ur + vr;
                im[i + k]           = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                const double ncr = cr * wr - ci * wi;
                ci               = cr * wi + ci * wr;
                cr               = ncr;
            }
        }
    }
}

std::vector<double> mel_filter_centers(int64_t n_mels, double sample_rate) {
    if (n_mels < 1 || sample_rate <= 0.0)
        throw ConfigError("mel_filter_centers: need n_mels >= 1 and positive rate");
    const std::vector<double> pts = mel_points(n_mels, sample_rate);
    return {pts.begin() + 1, pts.end() - 1};
}

AudioFeatures log_mel(const Waveform & w, const MelConfig & cfg) {
    if (w.sample_rate <= 0.0) throw InvalidInputError("log_mel: sample_rate must be positive");
    for (double s : w.samples)
        if (!std::isfinite(s)) throw InvalidInputError("log_mel: non-finite sample");
    if (cfg.n_mels < 1 || cfg.hop_ms <= 0.0 || cfg.window_ms < cfg.hop_ms ||
        cfg.floor_energy <= 0.0)
        throw ConfigError("log_mel: bad mel configuration");

    const int64_t win = int64_t(std::lround(cfg.window_ms / 1000.0 * w.sample_rate));
    const int64_t hop = int64_t(std::lround(cfg.hop_ms / 1000.0 * w.sample_rate));
    if (win < 2 || hop < 1) throw ConfigError("log_mel: window shorter than two samples");
    if (int64_t(w.samples.size()) < win)
        throw InvalidInputError("log_mel: waveform shorter than one window");

    const size_t n_fft  = next_pow2(size_t(win));
    const size_t n_bins = n_fft / 2 + 1;
    if (size_t(cfg.n_mels) + 2 > n_bins)
        throw ConfigError("log_mel: more mel filters than spectrum bins");

    // Triangular filters evaluated at the FFT bin frequencies.
    const std::vector<double> pts = mel_points(cfg.n_mels, w.sample_rate);
    std::vector<double>       fbank(size_t(cfg.n_mels) * n_bins, 0.0);
    for (int64_t k = 0; k < cfg.n_mels; ++k) {
        const double lo = pts[size_t(k)], c = pts[size_t(k) + 1], hi = pts[size_t(k) + 2];
        for (size_t j = 0; j < n_bins; ++j) {
            const double f = double(j) * w.sample_rate / double(n_fft);
            double       weight = 0.0;
            if (f > lo && f < c) weight = (f - lo) / (c - lo);
            else if (f >= c && f < hi) weight = (hi - f) / (hi - c);
            fbank[size_t(k) * n_bins + j] = weight;
        }
    }

    std::vector<double> window(static_cast<size_t>(win), 0.0);
    for (int64_t i = 0; i < win; ++i)
        window[size_t(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(win));

    const int64_t n_frames = 1 + (int64_t(w.samples.size()) - win) / hop;
    ad::TPtr      frames   = ad::make_tensor(n_frames, cfg.n_mels);
    std::vector<double> re(n_fft), im(n_fft);
    for (int64_t t = 0; t < n_frames; ++t) {
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        const double * src = w.samples.data() + size_t(t) * size_t(hop);
        for (int64_t i = 0; i < win; ++i) re[size_t(i)] = src[i] * window[size_t(i)];
        fft_radix2(re, im);
        for (int64_t k = 0; k < cfg.n_mels; ++k) {
            double e = 0.0;
            for (size_t j = 0; j < n_bins; ++j) {
                const double p = re[j] * re[j] + im[j] * im[j];
                e += fbank[size_t(k) * n_bins + j] * p;
            }
            frames->at(t, k) = std::log(e + cfg.floor_energy);
        }
    }
    return AudioFeatures{frames, 1000.0 / cfg.hop_ms, cfg.n_mels};
}

Waveform read_wav(const std::string & path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);

    char riff[4], wave[4];
    is.read(riff, 4);
    const uint32_t riff_size = get<uint32_t>(is, "RIFF size");
    (void)riff_size;
    is.read(wave, 4);
    if (!is || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
        throw IntegrityError(path + ": not a RIFF/WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    bool     have_fmt = false;
    Waveform w;
    while (true) {
        char id[4];
        if (!is.read(id, 4)) break;
        const uint32_t size = get<uint32_t>(is, "chunk size");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw IntegrityError(path + ": fmt chunk too small");
            format      = get<uint16_t>(is, "format");
            channels    = get<uint16_t>(is, "channels");
            sample_rate = get<uint32_t>(is, "sample rate");
            (void)get<uint32_t>(is, "byte rate");
            (void)get<uint16_t>(is, "block align");
            bits = get<uint16_t>(is, "bits per sample");
            is.ignore(std::streamsize(size) - 16 + (size % 2));
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!have_fmt) throw IntegrityError(path + ": data chunk before fmt chunk");
            if (channels != 1)
                throw InvalidInputError(path + ": only mono WAV is supported");
            if (format == 1 && bits == 16) {
                const size_t n = size / 2;
                w.samples.resize(n);
                for (size_t i = 0; i < n; ++i)
                    w.samples[i] = double(get<int16_t>(is, "sample")) / 32768.0;
            } else if (format == 3 && bits == 32) {
                const size_t n = size / 4;
                w.samples.resize(n);
                for (size_t i = 0; i < n; ++i) w.samples[i] = double(get<float>(is, "sample"));
            } else {
                throw InvalidInputError(path + ": unsupported WAV encoding (need 16-bit PCM or 32-bit float)");
            }
            if (size % 2) is.ignore(1);
            w.sample_rate = double(sample_rate);
            for (double s : w.samples)
                if (!std::isfinite(s)) throw InvalidInputError(path + ": non-finite sample");
            return w;
        } else {
            is.ignore(std::streamsize(size) + (size % 2));
            if (!is) throw IntegrityError(path + ": truncated chunk");
        }
    }
    throw IntegrityError(path + ": no data chunk");
}

void write_wav(const std::string & path, const Waveform & w, bool float_format) {
    if (w.sample_rate <= 0.0) throw InvalidInputError("write_wav: sample_rate must be positive");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot create " + path);

    const uint16_t bits       = float_format ? 32 : 16;
    const uint32_t data_bytes = uint32_t(w.samples.size() * (bits / 8));
    const uint32_t rate       = uint32_t(std::lround(w.sample_rate));

    os.write("RIFF", 4);
    put<uint32_t>(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put<uint32_t>(os, 16);
    put<uint16_t>(os, float_format ? 3 : 1);
    put<uint16_t>(os, 1); // mono
    put<uint32_t>(os, rate);
    put<uint32_t>(os, rate * (bits / 8u));
    put<uint16_t>(os, uint16_t(bits / 8));
    put<uint16_t>(os, bits);
    os.write("data", 4);
    put<uint32_t>(os, data_bytes);
    for (double s : w.samples) {
        if (float_format) {
            put<float>(os, float(s));
        } else {
            const double clamped = std::min(1.0 - 1.0 / 32768.0, std::max(-1.0, s));
            put<int16_t>(os, int16_t(std::lround(clamped * 32768.0)));
        }
    }
    if (!os) throw IoError("write failed for " + path);
}

void write_features(const std::string & path, const AudioFeatures & f) {
    if (!f.frames || f.frames->rows < 1 || f.frames->cols != f.n_mels || f.frame_rate <= 0.0)
        throw InvalidInputError("write_features: malformed features");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot create " + path);
    os.write("DLMF", 4);
    put<uint32_t>(os, 1);
    put<int64_t>(os, f.frames->rows);
    put<int64_t>(os, f.n_mels);
    put<double>(os, f.frame_rate);
    os.write(reinterpret_cast<const char *>(f.frames->v.data()),
             std::streamsize(f.frames->v.size() * sizeof(double)));
    if (!os) throw IoError("write failed for " + path);
}

AudioFeatures read_features(const std::string & path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DLMF", 4) != 0)
        throw IntegrityError(path + ": bad feature file magic");
    const uint32_t version = get<uint32_t>(is, "version");
    if (version != 1) throw IntegrityError(path + ": unsupported feature file version");
    const int64_t n_frames = get<int64_t>(is, "n_frames");
    const int64_t n_mels   = get<int64_t>(is, "n_mels");
    const double  rate     = get<double>(is, "frame_rate");
    if (n_frames < 1 || n_mels < 1 || rate <= 0.0)
        throw IntegrityError(path + ": implausible feature header");

    AudioFeatures f;
    f.frames     = ad::make_tensor(n_frames, n_mels);
    f.frame_rate = rate;
    f.n_mels     = n_mels;
    if (!is.read(reinterpret_cast<char *>(f.frames->v.data()),
                 std::streamsize(f.frames->v.size() * sizeof(double))))
        throw IntegrityError(path + ": truncated feature payload");
    char extra;
    if (is.read(&extra, 1)) throw IntegrityError(path + ": trailing bytes after payload");
    return f;
}

} // namespace dalm::audio
