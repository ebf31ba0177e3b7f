#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace oscbath {

// Process-wide worker count (CLI --threads).  0 means hardware concurrency.
inline int& thread_count() {
    static int n = 0;
    return n;
}

inline int effective_threads() {
    int n = thread_count();
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return n > 0 ? n : 1;
}

namespace thdetail {

// Persistent worker pool.  Chunks are handed out through an atomic counter;
// which thread runs a chunk never affects results because chunk boundaries
// are fixed by the caller.  Concurrent run() calls from different threads
// fall back to serial execution in the second caller.
class WorkerPool {
public:
    static WorkerPool& instance() {
        static WorkerPool pool;
        return pool;
    }

    void run(std::size_t nchunks, const std::function<void(std::size_t)>& fn) {
        const int want = effective_threads() - 1;
        if (want <= 0 || nchunks <= 1) {
            for (std::size_t c = 0; c < nchunks; ++c) fn(c);
            return;
        }
        std::unique_lock<std::mutex> gate(gate_, std::try_to_lock);
        if (!gate.owns_lock()) {
            for (std::size_t c = 0; c < nchunks; ++c) fn(c);
            return;
        }
        resize(static_cast<std::size_t>(want));
        {
            std::lock_guard<std::mutex> lk(m_);
            fn_ = &fn;
            nchunks_ = nchunks;
            next_.store(0, std::memory_order_relaxed);
            active_ = static_cast<int>(workers_.size());
            ++generation_;
        }
        cv_.notify_all();
        for (;;) {
            const std::size_t c = next_.fetch_add(1, std::memory_order_relaxed);
            if (c >= nchunks) break;
            fn(c);
        }
        std::unique_lock<std::mutex> lk(m_);
        done_.wait(lk, [&] { return active_ == 0; });
        fn_ = nullptr;
    }

    ~WorkerPool() {
        {
            std::lock_guard<std::mutex> lk(m_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

private:
    void resize(std::size_t n) {
        if (workers_.size() == n) return;
        if (!workers_.empty()) {
            {
                std::lock_guard<std::mutex> lk(m_);
                stop_ = true;
                ++generation_;
            }
            cv_.notify_all();
            for (auto& w : workers_) w.join();
            workers_.clear();
            std::lock_guard<std::mutex> lk(m_);
            stop_ = false;
        }
        std::uint64_t gen_now;
        {
            std::lock_guard<std::mutex> lk(m_);
            gen_now = generation_;
        }
        workers_.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            workers_.emplace_back([this, gen_now] { worker_loop(gen_now); });
    }

    void worker_loop(std::uint64_t seen) {
        for (;;) {
            const std::function<void(std::size_t)>* fn = nullptr;
            std::size_t nchunks = 0;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_.wait(lk, [&] { return generation_ != seen; });
                seen = generation_;
                if (stop_) return;
                fn = fn_;
                nchunks = nchunks_;
            }
            if (fn) {
                for (;;) {
                    const std::size_t c = next_.fetch_add(1, std::memory_order_relaxed);
                    if (c >= nchunks) break;
                    (*fn)(c);
                }
            }
            std::lock_guard<std::mutex> lk(m_);
            if (--active_ == 0) done_.notify_all();
        }
    }

    std::mutex gate_;
    std::mutex m_;
    std::condition_variable cv_, done_;
    std::vector<std::thread> workers_;
    const std::function<void(std::size_t)>* fn_ = nullptr;
    std::size_t nchunks_ = 0;
    std::atomic<std::size_t> next_{0};
    int active_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

} // namespace thdetail

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n).  Chunk
// boundaries do not depend on the thread count, so chunk-indexed output is
// bit-stable; reductions must combine per-chunk partials in chunk order.
inline void parallel_chunks(std::size_t n, std::size_t chunk,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    const std::function<void(std::size_t)> run_chunk = [&](std::size_t c) {
        fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    };
    thdetail::WorkerPool::instance().run(nchunks, run_chunk);
}

inline std::size_t num_chunks(std::size_t n, std::size_t chunk) {
    return n == 0 ? 0 : (n + chunk - 1) / chunk;
}

} // namespace oscbath
