#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace nmrprof {

/// Deterministic xoshiro256++ stream. Streams are derived from a master seed
/// plus arbitrary tags (variable index, iteration, purpose), so independent
/// consumers never share state and parallel scheduling cannot reorder draws.
/// Uniform and normal variates are generated from the raw bits directly,
/// keeping sequences identical across standard-library implementations.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) { init(seed); }

    RngStream(std::uint64_t seed, std::uint64_t tag0, std::uint64_t tag1 = 0,
              std::uint64_t tag2 = 0) {
        std::uint64_t h = seed;
        h = splitmix(h ^ (0x9e3779b97f4a7c15ULL + tag0));
        h = splitmix(h ^ (0xbf58476d1ce4e5b9ULL + tag1));
        h = splitmix(h ^ (0x94d049bb133111ebULL + tag2));
        init(h);
    }

    std::uint64_t nextU64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1)
    double uniform() { return static_cast<double>(nextU64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per call, pair cached)
    double normal() {
        if (hasSpare_) {
            hasSpare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        hasSpare_ = true;
        return r * std::cos(a);
    }

    /// Index in [0, n)
    std::size_t index(std::size_t n) {
        // 128-bit multiply avoids modulo bias
        const unsigned __int128 m =
            static_cast<unsigned __int128>(nextU64()) * static_cast<unsigned __int128>(n);
        return static_cast<std::size_t>(m >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    void init(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : s_) {
            x = splitmix(x);
            s = x;
        }
        hasSpare_ = false;
        spare_ = 0.0;
    }

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4] = {};
    bool hasSpare_ = false;
    double spare_ = 0.0;
};

} // namespace nmrprof
