#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace stochflow {

/// Static contiguous partition of [0, count) over `threads` workers.
/// Every index is visited exactly once and workers never share an index, so a
/// body that writes only to slot i is deterministic for any thread count.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& body) {
    if (count == 0) return;
    if (threads < 1) threads = 1;
    const auto t = static_cast<std::size_t>(threads);
    if (t == 1 || count < 2 * t) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(t);
    std::vector<std::exception_ptr> errors(t);
    const std::size_t chunk = (count + t - 1) / t;
    for (std::size_t w = 0; w < t; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        pool.emplace_back([&, w, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace stochflow
