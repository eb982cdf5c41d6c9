#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace pddf {

inline int hardware_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, total).
/// Chunk boundaries depend only on `chunk` — never on the thread count — so
/// callers that write per-chunk results and reduce them in chunk order get
/// bit-identical output at any parallelism level.
inline void parallel_chunks(std::size_t total, std::size_t chunk, int threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (total == 0) return;
    const std::size_t nchunks = (total + chunk - 1) / chunk;
    if (threads <= 1 || nchunks == 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            fn(c, c * chunk, std::min(total, (c + 1) * chunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= nchunks) return;
            fn(c, c * chunk, std::min(total, (c + 1) * chunk));
        }
    };
    std::vector<std::thread> pool;
    int n = std::min<std::size_t>(threads, nchunks);
    pool.reserve(n - 1);
    for (int i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

}  // namespace pddf
