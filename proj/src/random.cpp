#include "maxent/random.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>
#include <vector>

namespace maxent {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::atomic<unsigned> g_threads{0};

} // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

double standard_normal(Engine& rng)
{
    // Box-Muller, cosine branch only: one uniform pair per draw
    const double u1 = uniform_open(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void set_thread_count(unsigned n)
{
    g_threads = n;
}

unsigned thread_count()
{
    const unsigned n = g_threads.load();
    if (n > 0)
        return n;
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {
// set inside pool workers so nested loops run inline instead of spawning more threads
thread_local bool t_in_worker = false;
} // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body)
{
    const std::size_t workers = t_in_worker ? 1 : std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            t_in_worker = true;
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace maxent
