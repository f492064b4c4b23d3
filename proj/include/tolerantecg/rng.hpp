#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace tecg {

// Deterministic, portable RNG. splitmix64 core with keyed splitting so that
// parallel workers can derive independent streams from (seed, stream_id)
// without sharing state. std::random distributions are implementation
// defined, so all draws below are hand-rolled.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(mix(seed ^ kGolden)) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += kGolden;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        state_ += kGolden;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Counter-based split: child stream is a pure function of (state, key).
    Rng split(std::uint64_t key) const {
        Rng child(0);
        child.state_ = mix(state_ ^ mix(key ^ 0xA5A5A5A5A5A5A5A5ULL));
        return child;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        // Rejection-free modulo bias is negligible for span << 2^64; use
        // Lemire-style multiply-shift for uniformity anyway.
        const unsigned __int128 m =
            static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(span);
        return lo + static_cast<std::int64_t>(m >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double gaussian() {
        // Box-Muller; two fresh uniforms per call keeps the stream stateless.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // k distinct indices from [0, n), order-independent draw.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        for (int i = 0; i < k; ++i) {
            const int j = static_cast<int>(uniform_int(i, n - 1));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(uniform_int(0, i));
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
    std::uint64_t state_;
};

}  // namespace tecg
