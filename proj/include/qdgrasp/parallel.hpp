#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qdgrasp {

    /// Runs f(i) for i in [0, n) on up to `workers` threads. Callers write
    /// results into per-index slots, so the outcome never depends on scheduling.
    /// The first exception thrown by any task is rethrown on the calling thread.
    template <typename F>
    void parallel_for(std::size_t n, unsigned workers, F&& f)
    {
        const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), n));
        if (threads <= 1) {
            for (std::size_t i = 0; i < n; ++i)
                f(i);
            return;
        }

        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;

        auto work = [&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n)
                    return;
                try {
                    f(i);
                }
                catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                    next.store(n);
                    return;
                }
            }
        };

        std::vector<std::thread> pool;
        pool.reserve(threads - 1);
        for (unsigned t = 1; t < threads; ++t)
            pool.emplace_back(work);
        work();
        for (auto& th : pool)
            th.join();

        if (error)
            std::rethrow_exception(error);
    }

} // namespace qdgrasp
