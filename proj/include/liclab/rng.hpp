#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace liclab {

// Counter-based deterministic generator: output i is a pure function of
// (key, i), so streams can be forked without sharing state. Every consumer
// in the lab forks its own stream; replaying a seed replays the run.
class Rng {
   public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    // Child generator for an independent purpose ("init", "noise", ...).
    Rng fork(std::string_view tag) const;
    Rng fork(std::uint64_t tag) const;

    std::uint64_t next_u64();
    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

    // [0, 1) with 24 bits of mantissa.
    float uniform();
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
    // Uniform over [lo, hi] inclusive.
    int uniform_int(int lo, int hi);
    // Box-Muller; consumes exactly two draws per call.
    float normal(float mean = 0.0f, float stddev = 1.0f);

    std::uint64_t key() const { return key_; }

   private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

// 64-bit FNV-1a, the checksum used by every file format in the lab.
std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t basis = 14695981039346656037ULL);

}  // namespace liclab
