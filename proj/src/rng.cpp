#include "liclab/rng.hpp"

#include <cmath>

namespace liclab {

namespace {

// splitmix64 finalizer; full-period mixer over the counter.
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : key_(mix64(seed ^ mix64(stream))) {}

Rng Rng::fork(std::uint64_t tag) const {
    Rng child(0);
    child.key_ = mix64(key_ ^ mix64(tag ^ 0xA5A5A5A5A5A5A5A5ULL));
    child.counter_ = 0;
    return child;
}

Rng Rng::fork(std::string_view tag) const {
    return fork(fnv1a64(tag.data(), tag.size()));
}

std::uint64_t Rng::next_u64() { return mix64(key_ + 0xD1B54A32D192ED03ULL * ++counter_); }

float Rng::uniform() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

int Rng::uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

float Rng::normal(float mean, float stddev) {
    double u1 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    return mean + stddev * static_cast<float>(r * std::cos(theta));
}

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t basis) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = basis;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace liclab
