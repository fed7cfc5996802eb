#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vibroline {

/// Worker cap from VIBROLINE_THREADS; unset, empty or 0 means one worker per
/// hardware thread.
inline std::size_t worker_count() {
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const char* env = std::getenv("VIBROLINE_THREADS");
    if (env == nullptr || *env == '\0') return hw;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || v < 0) return hw;
    return v == 0 ? hw : static_cast<std::size_t>(v);
}

/// Runs body(i) for i in [0, n). Each index is visited exactly once; results
/// must be written to per-index slots so output is independent of scheduling.
/// The first exception thrown by any worker is rethrown on the caller.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace vibroline
