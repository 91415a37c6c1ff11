#ifndef SYNCKERNEL_RNG_HPP
#define SYNCKERNEL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace synckernel {

/// Seeded stream generator with platform-independent output.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. It is seeded through std::seed_seq (also fully specified) from the
/// user seed and a stream id, so independent streams can be derived for
/// subjects, permutation schedules, bootstrap draws, etc. The std::*_distribution
/// templates are implementation-defined, so every draw below is spelled out.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double low, double high) { return low + (high - low) * uniform(); }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// Uniform integer in [0, n), unbiased (rejection on the top remainder).
    std::uint64_t index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(index(i));
            std::swap(values[i - 1], values[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stream ids. Keeping them in one place avoids two consumers sharing a stream.
namespace streams {
inline constexpr std::uint64_t latent = 1;
inline constexpr std::uint64_t scores = 2;
inline constexpr std::uint64_t score_shuffle = 3;
inline constexpr std::uint64_t pair_sample = 10;
inline constexpr std::uint64_t pairwise_permutations = 11;
inline constexpr std::uint64_t kernel_permutations = 12;
inline constexpr std::uint64_t bandwidth_vertices = 13;
inline constexpr std::uint64_t null_relabel = 14;
inline constexpr std::uint64_t bootstrap = 20;
inline constexpr std::uint64_t subject_base = 1'000'000;
inline constexpr std::uint64_t roi_noise_base = 2'000'000;
}  // namespace streams

}  // namespace synckernel

#endif  // SYNCKERNEL_RNG_HPP
