#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace protoscope {

// Counter-based deterministic RNG. A draw depends only on (seed, stream_id,
// counter), so any (level, replicate, example) task can be given its own
// stream and produce the same values whether it runs serially or on a thread
// pool. Mixing is the splitmix64 finalizer applied to a keyed counter.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : key_(mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream_id + 0x8e9b97f4a7c15d3bULL))) {}

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, bound); bound > 0
    std::uint64_t uniform_int(std::uint64_t bound) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % bound;
    }

    // standard normal via Box-Muller (one value per call, spare discarded so
    // the draw count per sample is fixed)
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent child stream; tags compose, so
    // stream.substream(a).substream(b) is stable regardless of call site.
    RngStream substream(std::uint64_t tag) const { return RngStream(key_, tag); }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace protoscope
