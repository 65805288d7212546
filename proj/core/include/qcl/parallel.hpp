#pragma once

// Deterministic parallel reduction: items are grouped into fixed chunks,
// each chunk is accumulated serially in item order, and chunk results are
// merged by a fixed pairwise tree. The result does not depend on the thread
// count or on scheduling.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace qcl {

// QCL_THREADS if set to a positive integer, otherwise the hardware count.
inline unsigned default_thread_count() {
    if (const char* env = std::getenv("QCL_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// make(): fresh accumulator. work(item, acc): adds one item.
// merge(acc, other): folds `other` into `acc`. The first exception thrown
// (lowest chunk index) aborts the run and is rethrown.
template <class Make, class Work, class Merge>
auto chunked_reduce(std::size_t n_items, std::size_t chunk, unsigned threads, Make make, Work work,
                    Merge merge) {
    using Acc = decltype(make());
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t n_chunks = n_items == 0 ? 0 : (n_items + chunk - 1) / chunk;
    std::vector<std::optional<Acc>> parts(n_chunks);
    std::vector<std::exception_ptr> errors(n_chunks);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};

    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                Acc acc = make();
                const std::size_t end = std::min(n_items, (c + 1) * chunk);
                for (std::size_t i = c * chunk; i < end; ++i) work(i, acc);
                parts[c].emplace(std::move(acc));
            } catch (...) {
                errors[c] = std::current_exception();
                failed.store(true);
            }
        }
    };

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n_chunks, 1))));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    if (n_chunks == 0) return make();
    for (std::size_t stride = 1; stride < n_chunks; stride *= 2) {
        for (std::size_t i = 0; i + stride < n_chunks; i += 2 * stride) merge(*parts[i], *parts[i + stride]);
    }
    return std::move(*parts[0]);
}

// Runs body(i) for i in [0, n) on `threads` workers; no ordering guarantees.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body body) {
    struct Nothing {};
    chunked_reduce(
        n, 1, threads, [] { return Nothing{}; }, [&body](std::size_t i, Nothing&) { body(i); },
        [](Nothing&, const Nothing&) {});
}

}  // namespace qcl
