#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mmclust {

// splitmix64 finalizer; derives independent stream seeds from (seed, tag).
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG. mt19937_64 is fully specified by the standard, and all
// transforms below are hand-rolled, so streams are identical across
// platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; second draw cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // uniform index in [0, n), unbiased via rejection
    size_t index(size_t n) {
        uint64_t bound = UINT64_MAX - UINT64_MAX % static_cast<uint64_t>(n);
        uint64_t x = next_u64();
        while (x >= bound) x = next_u64();
        return static_cast<size_t>(x % static_cast<uint64_t>(n));
    }

    // Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace mmclust
