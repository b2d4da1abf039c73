#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace fpie {

namespace detail {
inline int& thread_count_ref() {
    static int n = 1;
    return n;
}
} // namespace detail

/// Global worker count for kernel-internal parallelism. Default 1.
inline void set_num_threads(int n) { detail::thread_count_ref() = n < 1 ? 1 : n; }
inline int num_threads() { return detail::thread_count_ref(); }

/// Runs fn(i0, i1) over [begin, end) split into fixed-size chunks.
///
/// Chunk boundaries depend only on (begin, end, grain), never on the thread
/// count, and every chunk writes disjoint state in the callers we have, so
/// results are bit-identical for any --threads setting.
template <typename Fn>
void parallel_for(int64_t begin, int64_t end, int64_t grain, const Fn& fn) {
    const int64_t total = end - begin;
    if (total <= 0) return;
    if (grain < 1) grain = 1;
    const int64_t chunks = (total + grain - 1) / grain;
    const int workers = static_cast<int>(std::min<int64_t>(num_threads(), chunks));
    if (workers <= 1) {
        fn(begin, end);
        return;
    }
    std::atomic<int64_t> next{0};
    auto work = [&]() {
        for (;;) {
            const int64_t k = next.fetch_add(1, std::memory_order_relaxed);
            if (k >= chunks) break;
            const int64_t i0 = begin + k * grain;
            const int64_t i1 = std::min(end, i0 + grain);
            fn(i0, i1);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 0; t < workers - 1; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

} // namespace fpie
