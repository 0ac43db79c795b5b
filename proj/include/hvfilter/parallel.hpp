#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace hvf {

/// Worker count from an explicit request, else HVFILTER_WORKERS, else 1.
inline unsigned resolve_workers(int requested = 0) {
    if (requested > 0)
        return static_cast<unsigned>(requested);
    if (const char* env = std::getenv("HVFILTER_WORKERS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0)
                return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    return 1;
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Results must be written to
/// per-index slots; the first exception (lowest index) is rethrown after all tasks finish.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    std::vector<std::exception_ptr> errors(count);
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool)
            t.join();
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace hvf
