#ifndef GLIOGRAD_RNG_HPP
#define GLIOGRAD_RNG_HPP

#include <cstdint>

namespace gg {

// Named purpose of a random stream. Separate streams keep the draw sequences
// of unrelated subsystems independent of each other, so e.g. adding an extra
// augmentation draw does not shift patch sampling.
enum class RngUse : uint64_t {
    Init = 1,
    PatchSampling = 2,
    Augmentation = 3,
    Dropout = 4,
    Phantom = 5,
};

// xoshiro256++ seeded through splitmix64. Self-contained so that
// (seed, stream, draw index) -> value is identical across platforms;
// std::uniform_* distributions are not portable.
class RngStream {
public:
    RngStream(uint64_t seed, RngUse use);

    uint64_t next_u64();

    // uniform in [0, 1)
    double next_uniform();

    double uniform(double lo, double hi);

    // uniform integer in [lo, hi], inclusive, unbiased (mask rejection)
    int64_t uniform_int(int64_t lo, int64_t hi);

    // standard normal via Marsaglia polar method
    double next_gaussian();

    bool bernoulli(double p) { return next_uniform() < p; }

private:
    uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stateless 64-bit mix, used to derive per-case seeds from a master seed.
uint64_t splitmix64(uint64_t x);

} // namespace gg

#endif
