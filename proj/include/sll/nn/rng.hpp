#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace sll::nn {

/// Counter-based generator: every draw is a keyed hash of (seed, stream,
/// counter), so output depends only on those three values and the number of
/// prior draws. No platform std:: distributions are involved.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    double normal();
    double normal(double mean, double stddev);
    /// Laplace(0, scale). scale == 0 returns exactly 0.
    double laplace(double scale);

    /// Independent generator on a derived stream; does not advance *this.
    Rng fork(std::uint64_t stream) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Stable 64-bit hash of a string, used to name rng streams.
std::uint64_t stream_id(const char* name);

}  // namespace sll::nn
