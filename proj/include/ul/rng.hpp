#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ul {

// Deterministic xoshiro256**-based generator. We own the implementation so
// that seeds reproduce bit-identically regardless of standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        // splitmix64 expansion of the seed into the xoshiro state
        uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            s = z ^ (z >> 31);
        }
        has_gauss_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        // rejection sampling to avoid modulo bias
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int index(size_t n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

    double gauss(double mu = 0.0, double sigma = 1.0) {
        if (has_gauss_) {
            has_gauss_ = false;
            return mu + gauss_next_ * sigma;
        }
        // Box-Muller
        const double two_pi = 6.283185307179586;
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        gauss_next_ = r * std::sin(two_pi * u2);
        has_gauss_ = true;
        return mu + r * std::cos(two_pi * u2) * sigma;
    }

    template <class T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = below(i);
            std::swap(xs[i - 1], xs[j]);
        }
    }

    // categorical draw from unnormalized weights
    int categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double r = uniform() * total;
        double c = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            c += weights[i];
            if (r < c) return static_cast<int>(i);
        }
        return weights.empty() ? 0 : static_cast<int>(weights.size()) - 1;
    }

    // independent stream for (seed, index) pairs, e.g. one per decoded example
    static Rng fork(uint64_t seed, uint64_t index) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4] = {};
    bool has_gauss_ = false;
    double gauss_next_ = 0.0;
};

}  // namespace ul
