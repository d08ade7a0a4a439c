#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace srnn {

// Deterministic random stream. Wraps mt19937_64 but does all value
// conversion (uniform doubles, bounded ints, shuffles) by hand so the
// produced streams do not depend on the standard library's unspecified
// distribution algorithms. Reproducibility gates compare bits.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed), seed_mix_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), rejection-sampled to avoid modulo bias
    int uniform_int(int n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates with our own index draws
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

    // Independent child stream, e.g. one per generation shard.
    Rng derive(std::uint64_t salt) const {
        std::uint64_t x = seed_mix_ ^ (salt + 0x9e3779b97f4a7c15ULL);
        x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27; x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return Rng(x);
    }

    void reseed(std::uint64_t seed) {
        gen_.seed(seed);
        seed_mix_ = seed;
    }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_mix_ = 0;
};

} // namespace srnn
