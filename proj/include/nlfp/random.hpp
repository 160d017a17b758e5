#pragma once

#include <cstdint>
#include <limits>

namespace nlfp {

/// xoshiro256** generator with splitmix64 seeding.
///
/// Streams are identified by (seed, stream id); `split` derives a child stream
/// deterministically, so a shard layout fixed by the caller reproduces the same
/// draws regardless of how shards are scheduled on threads. Satisfies
/// UniformRandomBitGenerator, but the normal/exponential/uniform helpers below
/// are implemented here so results do not depend on the standard library.
class RandomStream {
public:
    using result_type = std::uint64_t;

    explicit RandomStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    RandomStream split(std::uint64_t child) const;

    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double exponential();
    /// Poisson(mean) by inversion; means above 32 are summed from chunks.
    std::uint64_t poisson(double mean);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    std::uint64_t s_[4];
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace nlfp
