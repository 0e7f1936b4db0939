#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace nmrprof {

/// Resolve a thread-count request: 0 means "use hardware concurrency".
inline unsigned resolveThreads(unsigned requested) {
    if (requested != 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Run fn(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Chunk boundaries depend only on n and the worker count, and each
/// index is processed by exactly one worker, so any computation that writes
/// per-index slots produces identical results for any thread count.
inline void parallelFor(std::size_t n, unsigned threads,
                        const std::function<void(std::size_t, std::size_t)>& fn) {
    threads = resolveThreads(threads);
    if (n == 0) return;
    if (threads <= 1 || n < 2) {
        fn(0, n);
        return;
    }
    const std::size_t nChunks = std::min<std::size_t>(threads, n);
    const std::size_t chunk = (n + nChunks - 1) / nChunks;
    std::vector<std::thread> pool;
    pool.reserve(nChunks);
    for (std::size_t c = 0; c < nChunks; ++c) {
        const std::size_t lo = c * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

} // namespace nmrprof
