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

namespace prism {

/// Worker count from PRISM_THREADS (0 or unset = hardware concurrency).
inline std::size_t configured_threads() {
    std::size_t requested = 0;
    if (const char* env = std::getenv("PRISM_THREADS")) {
        try {
            requested = static_cast<std::size_t>(std::stoul(env));
        } catch (const std::exception&) {
            requested = 0;
        }
    }
    if (requested == 0) requested = std::max(1u, std::thread::hardware_concurrency());
    return requested;
}

/// Runs body(i) for i in [0, count). Each index writes only its own slot,
/// so the result is independent of the worker count. The first exception
/// (lowest index) is rethrown after all workers join.
template <typename Body>
void parallel_for(std::size_t count, Body&& body, std::size_t threads = configured_threads()) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex guard;
    std::exception_ptr error;
    std::size_t error_index = count;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(guard);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    pool.clear();
    if (error) std::rethrow_exception(error);
}

} // namespace prism
