// Static-partition parallel_for. Each index is processed exactly once and
// results must be written to per-index slots, so the outcome is independent
// of the worker count.
#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace freqvit {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FREQVIT_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

template <class Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const size_t t = std::min<size_t>(static_cast<size_t>(threads), n);
    std::vector<std::thread> workers;
    workers.reserve(t);
    for (size_t w = 0; w < t; ++w) {
        const size_t lo = n * w / t;
        const size_t hi = n * (w + 1) / t;
        workers.emplace_back([lo, hi, &fn] {
            for (size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : workers) th.join();
}

}  // namespace freqvit
