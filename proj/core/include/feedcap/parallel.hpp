#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace feedcap {

// Static block split of [0,n) across at most `threads` workers. Callers must
// write only to per-index slots so the result is identical for any thread
// count; threads <= 1 runs inline.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (n == 0) return;
    std::size_t workers = threads <= 0 ? std::thread::hardware_concurrency() : static_cast<std::size_t>(threads);
    if (workers == 0) workers = 1;
    if (workers > n) workers = n;
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = lo + chunk < n ? lo + chunk : n;
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace feedcap
