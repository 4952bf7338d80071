#ifndef LEVYKIT_RANDOM_HPP
#define LEVYKIT_RANDOM_HPP

// Reproducible parallel streams.  Work is cut into fixed blocks of paths; each
// block draws from its own mt19937_64 seeded from (seed, block index), and the
// per-block results are reduced in block order.  The output therefore does not
// depend on how many threads ran.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "levykit/errors.hpp"

namespace levykit {

using Rng = std::mt19937_64;

inline constexpr std::size_t mc_block_size = 4096;

/// Default seed used whenever a caller gives none.
inline constexpr std::uint64_t default_seed = 20240607;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Rng block_rng(std::uint64_t seed, std::uint64_t block) {
    const std::uint64_t a = splitmix64(seed);
    const std::uint64_t b = splitmix64(a ^ splitmix64(block + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32)};
    return Rng(seq);
}

/// Worker count: the explicit request if any, else hardware concurrency;
/// LEVYKIT_THREADS caps either.
inline unsigned worker_count(std::optional<unsigned> requested = std::nullopt) {
    unsigned n = requested.value_or(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("LEVYKIT_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return std::max(1u, n);
}

/// Runs body(block_index, first_path, count, rng) for every block of n paths
/// and returns the per-block results in block order.
template <class R, class Body>
std::vector<R> run_blocks(std::size_t n, std::uint64_t seed, Body&& body, std::optional<unsigned> threads = std::nullopt) {
    const std::size_t blocks = (n + mc_block_size - 1) / mc_block_size;
    std::vector<R> out(blocks);
    const unsigned workers = std::min<std::size_t>(worker_count(threads), std::max<std::size_t>(blocks, 1));
    auto do_block = [&](std::size_t b) {
        Rng rng = block_rng(seed, b);
        const std::size_t first = b * mc_block_size;
        out[b] = body(b, first, std::min(mc_block_size, n - first), rng);
    };
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) do_block(b);
        return out;
    }
    std::mutex m;
    std::size_t next = 0;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            std::size_t b;
            {
                std::lock_guard<std::mutex> lock(m);
                if (next >= blocks || failure) return;
                b = next++;
            }
            try {
                do_block(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(m);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

/// Running sums for a mean and its standard error.
struct Moments {
    double n = 0.0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double v) {
        n += 1.0;
        sum += v;
        sum_sq += v * v;
    }
    Moments& operator+=(const Moments& o) {
        n += o.n;
        sum += o.sum;
        sum_sq += o.sum_sq;
        return *this;
    }
    double mean() const { return n > 0 ? sum / n : 0.0; }
    double variance() const {
        if (n < 2) return 0.0;
        return std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
    }
    double std_error() const { return n > 0 ? std::sqrt(variance() / n) : 0.0; }
};

}  // namespace levykit

#endif  // LEVYKIT_RANDOM_HPP
