#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace maxent {

using Engine = std::mt19937_64;

/// Seed for stream `stream` derived from a base seed. Streams are
/// independent of the order or thread in which they are consumed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

inline Engine make_engine(std::uint64_t base, std::uint64_t stream)
{
    return Engine(derive_seed(base, stream));
}

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Engine& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform in (0, 1).
inline double uniform_open(Engine& rng)
{
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Engine& rng);

/// Thread cap for parallel loops; 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(i) for i in [0, n). Each index runs exactly once; callers write
/// results into slot i so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace maxent
