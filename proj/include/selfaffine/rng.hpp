#pragma once

#include <cstdint>

// Counter-based random streams. A draw is a pure function of
// (seed, stream, counter), so results never depend on how work is
// split between threads.

namespace selfaffine {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// splitmix64 sequence positioned at a derived substream.
class StreamRng {
  public:
    StreamRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter)
        : state_(mix64(mix64(seed ^ 0x6A09E667F3BCC909ULL) + mix64(stream + 0x9E3779B97F4A7C15ULL)) ^
                 mix64(counter * 0xD1B54A32D192ED03ULL + 0x243F6A8885A308D3ULL)) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        return mix64(z);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

  private:
    std::uint64_t state_;
};

}  // namespace selfaffine
