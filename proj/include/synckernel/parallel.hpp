#ifndef SYNCKERNEL_PARALLEL_HPP
#define SYNCKERNEL_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace synckernel {

/// Worker budget for library-internal parallel loops. 0 means hardware concurrency.
struct Parallelism {
    unsigned threads = 1;

    unsigned resolved() const {
        if (threads != 0) return threads;
        return std::max(1u, std::thread::hardware_concurrency());
    }
};

/// Runs fn(i) for i in [0, n). Each index must write only to its own output slot;
/// results are then independent of the thread count and of scheduling.
/// If tasks throw, the exception from the lowest failing index is rethrown on the
/// calling thread, which is the same one a serial run would report.
template <typename Fn>
void parallel_for(std::size_t n, Parallelism par, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(par.resolved(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::size_t failed_index = n;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace synckernel

#endif  // SYNCKERNEL_PARALLEL_HPP
