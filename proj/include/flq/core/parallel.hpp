#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace flq {

// Fork-join helper for data-parallel loops. Work is split into contiguous
// chunks, one per worker, so writes stay disjoint and results do not depend
// on the partitioning. Reductions must not go through this; diagnostics that
// sum over nodes use a fixed-order serial loop instead.

inline std::atomic<int>& worker_count_slot() {
    static std::atomic<int> count{0}; // 0 = not configured yet
    return count;
}

inline int default_workers() {
    int c = worker_count_slot().load(std::memory_order_relaxed);
    if (c > 0) return c;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

inline void set_default_workers(int n) {
    worker_count_slot().store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

template <typename Body>
void parallel_for(std::size_t n, const Body& body, int workers = 0) {
    if (workers <= 0) workers = default_workers();
    if (n == 0) return;
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    if (w <= 1) {
        body(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + w - 1) / w;
    std::vector<std::thread> threads;
    threads.reserve(w - 1);
    for (std::size_t t = 1; t < w; ++t) {
        const std::size_t begin = t * chunk;
        if (begin >= n) break;
        const std::size_t end = std::min(n, begin + chunk);
        threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    body(std::size_t{0}, std::min(n, chunk));
    for (auto& th : threads) th.join();
}

} // namespace flq
