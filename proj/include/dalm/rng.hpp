#pragma once
// Deterministic RNG. All randomness in the project flows through this
// wrapper so runs are reproducible bit-exactly from a single seed.
// Distributions are implemented here rather than with <random>'s
// distribution classes, whose output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <string>

namespace dalm {

class Rng {
  public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        state_ = seed;
        // splitmix64 warm-up so nearby seeds decorrelate
        next_raw();
        have_normal_ = false;
    }

    uint64_t next_raw() {
        // splitmix64: tiny state, serializable, excellent for this scale
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double u01() { return double(next_raw() >> 11) * 0x1.0p-53; }

    // Uniform on [lo, hi].
    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    // Standard normal via Box-Muller (cached pair).
    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do { u1 = u01(); } while (u1 <= 0.0);
        double u2 = u01();
        double r  = std::sqrt(-2.0 * std::log(u1));
        double a  = 6.283185307179586476925286766559 * u2;
        cached_      = r * std::sin(a);
        have_normal_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        // multiply-shift; bias is negligible for the n used here
        return uint64_t((__uint128_t(next_raw()) * n) >> 64);
    }

    // Derive an independent stream for a named purpose.
    Rng fork(const std::string & tag) const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : tag) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        Rng r;
        r.state_       = state_ ^ h;
        r.have_normal_ = false;
        r.next_raw();
        return r;
    }

    std::string save_state() const {
        std::ostringstream os;
        os << state_ << " " << (have_normal_ ? 1 : 0) << " " << std::hexfloat << cached_;
        return os.str();
    }

    void load_state(const std::string & s) {
        std::istringstream is(s);
        int flag = 0;
        std::string hex;
        is >> state_ >> flag >> hex;
        have_normal_ = flag != 0;
        cached_      = hex.empty() ? 0.0 : std::strtod(hex.c_str(), nullptr);
    }

  private:
    uint64_t state_       = 0;
    bool     have_normal_ = false;
    double   cached_      = 0.0;
};

} // namespace dalm
