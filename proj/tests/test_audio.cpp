// Audio frontend: FFT against a naive DFT, mel filterbank response, WAV and
// feature-file round trips, and corruption handling.
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "dalm/audio.hpp"
#include "dalm/errors.hpp"
#include "dalm/rng.hpp"

using namespace dalm;
using audio::AudioFeatures;
using audio::MelConfig;
using audio::Waveform;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent O(n^2) reference transform.
void naive_dft(const std::vector<double> & in_re, const std::vector<double> & in_im,
               std::vector<double> & out_re, std::vector<double> & out_im) {
    const size_t n = in_re.size();
    out_re.assign(n, 0.0);
    out_im.assign(n, 0.0);
    for (size_t k = 0; k < n; ++k) {
        for (size_t j = 0; j < n; ++j) {
            const double a = -2.0 * kPi * double(k) * double(j) / double(n);
            out_re[k] += in_re[j] * std::cos(a) - in_im[j] * std::sin(a);
            out_im[k] += in_re[j] * std::sin(a) + in_im[j] * std::cos(a);
        }
    }
}

// Independent mel conversions for the filterbank oracle.
double ref_hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double ref_mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double ref_center_hz(int64_t k, int64_t n_mels, double sample_rate) {
    const double top = ref_hz_to_mel(sample_rate / 2.0);
    return ref_mel_to_hz(top * double(k + 1) / double(n_mels + 1));
}

Waveform sine_wave(double freq_hz, double seconds, double sample_rate, double amp) {
    Waveform w;
    w.sample_rate = sample_rate;
    const size_t n = size_t(seconds * sample_rate);
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i)
        w.samples[i] = amp * std::sin(2.0 * kPi * freq_hz * double(i) / sample_rate);
    return w;
}

std::string temp_path(const char * name) { return std::string("/tmp/") + name; }

} // namespace

TEST_CASE("fft matches a naive dft on random inputs") {
    Rng rng(21);
    for (size_t n : {size_t(1), size_t(2), size_t(4), size_t(8), size_t(64), size_t(256)}) {
        std::vector<double> re(n), im(n);
        for (size_t i = 0; i < n; ++i) {
            re[i] = rng.uniform(-1.0, 1.0);
            im[i] = rng.uniform(-1.0, 1.0);
        }
        std::vector<double> want_re, want_im, got_re = re, got_im = im;
        naive_dft(re, im, want_re, want_im);
        audio::fft_radix2(got_re, got_im);
        for (size_t i = 0; i < n; ++i) {
            CHECK(std::abs(got_re[i] - want_re[i]) < 1e-9);
            CHECK(std::abs(got_im[i] - want_im[i]) < 1e-9);
        }
    }
}

TEST_CASE("fft basics: impulse, pure tone, size checks") {
    std::vector<double> re(8, 0.0), im(8, 0.0);
    re[0] = 1.0;
    audio::fft_radix2(re, im);
    for (size_t i = 0; i < 8; ++i) {
        CHECK(re[i] == doctest::Approx(1.0));
        CHECK(im[i] == doctest::Approx(0.0).scale(1.0));
    }

    // cos(2*pi*3*j/16) concentrates at bins 3 and 13 with magnitude n/2.
    std::vector<double> cre(16), cim(16, 0.0);
    for (size_t j = 0; j < 16; ++j) cre[j] = std::cos(2.0 * kPi * 3.0 * double(j) / 16.0);
    audio::fft_radix2(cre, cim);
    for (size_t k = 0; k < 16; ++k) {
        const double mag = std::sqrt(cre[k] * cre[k] + cim[k] * cim[k]);
        if (k == 3 || k == 13) CHECK(mag == doctest::Approx(8.0));
        else CHECK(mag == doctest::Approx(0.0).scale(1.0));
    }

    std::vector<double> bad_re(6), bad_im(6);
    CHECK_THROWS_AS(audio::fft_radix2(bad_re, bad_im), InvalidInputError);
    std::vector<double> a(4), b(2);
    CHECK_THROWS_AS(audio::fft_radix2(a, b), InvalidInputError);
}

TEST_CASE("log_mel: silence gives exactly log(floor) everywhere") {
    Waveform w;
    w.sample_rate = 16000.0;
    w.samples.assign(16000, 0.0);
    MelConfig cfg;
    AudioFeatures f = audio::log_mel(w, cfg);
    const double want = std::log(cfg.floor_energy);
    for (double x : f.frames->v) CHECK(x == want);
}

TEST_CASE("log_mel: frame arithmetic and metadata") {
    Waveform w = sine_wave(440.0, 1.0, 16000.0, 0.5);
    MelConfig cfg;
    AudioFeatures f = audio::log_mel(w, cfg);
    // window 400 samples, hop 160: 1 + (16000-400)/160 frames.
    CHECK(f.frames->rows == 98);
    CHECK(f.frames->cols == 80);
    CHECK(f.n_mels == 80);
    CHECK(f.frame_rate == 100.0);

    Waveform tiny;
    tiny.sample_rate = 16000.0;
    tiny.samples.assign(399, 0.0);
    CHECK_THROWS_AS((void)audio::log_mel(tiny, cfg), InvalidInputError);

    Waveform nan_wave = sine_wave(440.0, 0.1, 16000.0, 0.5);
    nan_wave.samples[5] = std::nan("");
    CHECK_THROWS_AS((void)audio::log_mel(nan_wave, cfg), InvalidInputError);

    MelConfig bad;
    bad.n_mels = 0;
    CHECK_THROWS_AS((void)audio::log_mel(w, bad), ConfigError);
    bad        = MelConfig{};
    bad.n_mels = 1000; // more filters than spectrum bins
    CHECK_THROWS_AS((void)audio::log_mel(w, bad), ConfigError);
}

TEST_CASE("log_mel: tone at a filter center peaks in that mel bin") {
    MelConfig cfg;
    const double sr = 16000.0;
    const std::vector<double> centers = audio::mel_filter_centers(cfg.n_mels, sr);
    REQUIRE(int64_t(centers.size()) == cfg.n_mels);

    for (int64_t k : {int64_t(14), int64_t(25), int64_t(40), int64_t(60), int64_t(76)}) {
        const double want_hz = ref_center_hz(k, cfg.n_mels, sr);
        CHECK(centers[size_t(k)] == doctest::Approx(want_hz).epsilon(1e-12));

        Waveform      w = sine_wave(want_hz, 0.5, sr, 0.5);
        AudioFeatures f = audio::log_mel(w, cfg);
        // Inspect a middle frame, away from onset effects.
        const int64_t t = f.frames->rows / 2;
        int64_t       best = 0;
        for (int64_t j = 1; j < f.frames->cols; ++j)
            if (f.frames->at(t, j) > f.frames->at(t, best)) best = j;
        CHECK(best == k);
    }
}

TEST_CASE("wav round trip preserves samples within format precision") {
    Rng      rng(22);
    Waveform w;
    w.sample_rate = 16000.0;
    w.samples.resize(1234);
    for (auto & s : w.samples) s = rng.uniform(-0.9, 0.9);

    const std::string p16 = temp_path("rt16.wav");
    audio::write_wav(p16, w, false);
    Waveform r16 = audio::read_wav(p16);
    REQUIRE(r16.samples.size() == w.samples.size());
    CHECK(r16.sample_rate == 16000.0);
    for (size_t i = 0; i < w.samples.size(); ++i)
        CHECK(std::abs(r16.samples[i] - w.samples[i]) <= 0.5 / 32768.0 + 1e-12);

    const std::string p32 = temp_path("rt32.wav");
    audio::write_wav(p32, w, true);
    Waveform r32 = audio::read_wav(p32);
    REQUIRE(r32.samples.size() == w.samples.size());
    for (size_t i = 0; i < w.samples.size(); ++i)
        CHECK(std::abs(r32.samples[i] - w.samples[i]) <= 1e-6);

    std::remove(p16.c_str());
    std::remove(p32.c_str());
}

TEST_CASE("wav reader rejects what it cannot represent") {
    CHECK_THROWS_AS((void)audio::read_wav("/tmp/definitely_missing.wav"), IoError);

    const std::string junk = temp_path("junk.wav");
    {
        std::ofstream os(junk, std::ios::binary);
        os << "THISISNOTAWAVFILEATALL........";
    }
    CHECK_THROWS_AS((void)audio::read_wav(junk), IntegrityError);

    // A stereo 16-bit file: header hand-built, then rejected for channels=2.
    const std::string stereo = temp_path("stereo.wav");
    {
        Waveform mono;
        mono.sample_rate = 8000.0;
        mono.samples.assign(64, 0.25);
        audio::write_wav(stereo, mono, false);
        std::fstream fs(stereo, std::ios::in | std::ios::out | std::ios::binary);
        fs.seekp(22); // channel count field
        const uint16_t two = 2;
        fs.write(reinterpret_cast<const char *>(&two), 2);
    }
    CHECK_THROWS_AS((void)audio::read_wav(stereo), InvalidInputError);

    // Truncated data chunk.
    const std::string trunc = temp_path("trunc.wav");
    {
        Waveform mono;
        mono.sample_rate = 8000.0;
        mono.samples.assign(64, 0.25);
        audio::write_wav(trunc, mono, false);
        std::ifstream  in(trunc, std::ios::binary);
        std::string    all((std::istreambuf_iterator<char>(in)), {});
        std::ofstream  out(trunc, std::ios::binary | std::ios::trunc);
        out.write(all.data(), std::streamsize(all.size() - 40));
    }
    CHECK_THROWS_AS((void)audio::read_wav(trunc), IntegrityError);

    std::remove(junk.c_str());
    std::remove(stereo.c_str());
    std::remove(trunc.c_str());
}

TEST_CASE("feature files round trip exactly and reject corruption") {
    Rng rng(23);
    AudioFeatures f;
    f.frames     = ad::make_tensor(7, 5);
    f.frame_rate = 100.0;
    f.n_mels     = 5;
    for (auto & x : f.frames->v) x = rng.normal();

    const std::string path = temp_path("feat.bin");
    audio::write_features(path, f);
    AudioFeatures g = audio::read_features(path);
    CHECK(g.frames->rows == 7);
    CHECK(g.frames->cols == 5);
    CHECK(g.n_mels == 5);
    CHECK(g.frame_rate == 100.0);
    CHECK(g.frames->v == f.frames->v); // bit exact

    // Truncate the payload.
    {
        std::ifstream in(path, std::ios::binary);
        std::string   all((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), std::streamsize(all.size() - 8));
    }
    CHECK_THROWS_AS((void)audio::read_features(path), IntegrityError);

    // Wrong magic.
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "NOPE";
    }
    CHECK_THROWS_AS((void)audio::read_features(path), IntegrityError);

    // Trailing garbage.
    audio::write_features(path, f);
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << "x";
    }
    CHECK_THROWS_AS((void)audio::read_features(path), IntegrityError);

    CHECK_THROWS_AS((void)audio::read_features("/tmp/missing_features.bin"), IoError);
    std::remove(path.c_str());
}
