#pragma once

#include <cmath>
#include <cstdint>

namespace mixcourse {

// Small self-contained PRNG so results are bit-reproducible for a fixed seed
// independent of the standard library. Streams are derived by hashing the
// master seed with stream identifiers (patient index, replicate index, ...),
// which keeps draws independent of thread scheduling and worker count.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Derive an independent stream from a seed and up to three stream ids.
    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        std::uint64_t s = mix(seed ^ 0x8f1bbcdcbfa53e0bULL);
        s = mix(s ^ a);
        s = mix(s ^ (b + 0x2545f4914f6cdd1dULL));
        s = mix(s ^ (c + 0x27d4eb2f165667c5ULL));
        return Rng(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1] — safe as a log() argument.
    double uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box–Muller without caching: deterministic draw order, two uniforms per
    // normal. Plenty fast relative to the likelihood evaluations around it.
    double gaussian() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double gaussian(double mean, double sd) { return mean + sd * gaussian(); }

    // Integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Index draw from unnormalized nonnegative weights.
    template <typename Vec> int categorical(const Vec &w, int n) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += w[i];
        double u = uniform() * total;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += w[i];
            if (u < acc) return i;
        }
        return n - 1;
    }

  private:
    std::uint64_t state_;
};

} // namespace mixcourse
