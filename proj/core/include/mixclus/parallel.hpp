#pragma once

#include <thread>
#include <vector>

namespace mixclus {

/// Static round-robin partition of [0, n) over `threads` workers. Each index
/// is handled by exactly one worker, so callers writing to per-index slots
/// get results independent of the thread count.
template <class F>
void parallel_for(int n, int threads, F&& body) {
    if (threads <= 1 || n < 2) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([t, n, workers, &body] {
            for (int i = t; i < n; i += workers) body(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace mixclus
