#pragma once

#include "dynsplat/core/types.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace dynsplat {

int default_thread_count();

/// Runs `fn(item, worker)` for every item in [0, count). Deterministic policies
/// give each worker a fixed contiguous range; otherwise workers pull items
/// from a shared counter. The first exception thrown by any worker is
/// rethrown on the calling thread.
template <typename Fn> void parallel_for(int count, const ExecPolicy& policy, Fn&& fn) {
    const int workers = std::max(1, std::min(policy.threads, count));
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i, 0);
        return;
    }

    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::atomic<int> next{0};
    auto run = [&](int worker) {
        try {
            if (policy.deterministic) {
                const int begin = static_cast<int>(static_cast<long long>(count) * worker / workers);
                const int end = static_cast<int>(static_cast<long long>(count) * (worker + 1) / workers);
                for (int i = begin; i < end; ++i) fn(i, worker);
            } else {
                for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i, worker);
            }
        } catch (...) {
            errors[static_cast<std::size_t>(worker)] = std::current_exception();
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    pool.clear();

    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

/// Number of workers parallel_for will actually use for `count` items.
inline int worker_count(int count, const ExecPolicy& policy) {
    return std::max(1, std::min(policy.threads, count));
}

} // namespace dynsplat
