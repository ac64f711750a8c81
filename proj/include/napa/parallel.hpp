#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace napa {

// Process-wide worker cap. Initialized from NAPA_THREADS when set, otherwise
// hardware concurrency. Results never depend on the worker count: every
// parallel loop in this library writes to disjoint indices.
inline int& max_threads_slot() {
    static int slot = [] {
        if (const char* env = std::getenv("NAPA_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }();
    return slot;
}

inline int max_threads() { return max_threads_slot(); }
inline void set_max_threads(int n) { max_threads_slot() = std::max(1, n); }

// Runs fn(i) for i in [0, n). `threads` <= 0 means the process-wide default.
// Static contiguous chunking; fn must only touch state owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (n == 0) return;
    int t = threads > 0 ? threads : max_threads();
    t = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(t), n));
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t) - 1);
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run_chunk = [&](int worker) {
        std::size_t lo = n * static_cast<std::size_t>(worker) / static_cast<std::size_t>(t);
        std::size_t hi = n * (static_cast<std::size_t>(worker) + 1) / static_cast<std::size_t>(t);
        try {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    };
    for (int w = 1; w < t; ++w) pool.emplace_back(run_chunk, w);
    run_chunk(0);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace napa
