#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace hobj {

namespace detail {
inline std::atomic<int>& thread_cap()
{
    static std::atomic<int> cap{1};
    return cap;
}
} // namespace detail

/// Global cap on internal parallelism (the CLI's --threads). Values < 1 mean 1.
inline void set_max_threads(int n) { detail::thread_cap().store(std::max(1, n)); }
inline int max_threads() { return detail::thread_cap().load(); }

/// Runs fn(i) for i in [begin, end). Iterations must write disjoint state.
template <typename Fn>
void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end, Fn&& fn, std::ptrdiff_t min_per_thread = 1)
{
    const std::ptrdiff_t count = end - begin;
    if (count <= 0)
        return;
    const std::ptrdiff_t workers = std::min<std::ptrdiff_t>(max_threads(), std::max<std::ptrdiff_t>(1, count / std::max<std::ptrdiff_t>(1, min_per_thread)));
    if (workers <= 1) {
        for (std::ptrdiff_t i = begin; i < end; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const std::ptrdiff_t per = (count + workers - 1) / workers;
    for (std::ptrdiff_t w = 0; w < workers; ++w) {
        const std::ptrdiff_t lo = begin + w * per;
        const std::ptrdiff_t hi = std::min(end, lo + per);
        if (lo >= hi)
            break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::ptrdiff_t i = lo; i < hi; ++i)
                fn(i);
        });
    }
    for (auto& t : pool)
        t.join();
}

} // namespace hobj
