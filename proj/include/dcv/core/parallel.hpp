#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dcv {

// Worker pool shared by all kernels. Kernels split disjoint index ranges
// across workers, so parallel execution is observationally pure.
class ThreadPool {
public:
    explicit ThreadPool(int workers) { start(workers); }
    ~ThreadPool() { stop(); }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    int size() const { return static_cast<int>(threads_.size()) + 1; }  // workers + caller

    void resize(int workers) {
        stop();
        start(workers);
    }

    void submit(std::function<void()> fn) {
        {
            std::lock_guard<std::mutex> lk(mu_);
            tasks_.push_back(std::move(fn));
        }
        cv_.notify_one();
    }

private:
    void start(int workers) {
        if (workers < 0) workers = 0;
        done_ = false;
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    void stop() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            done_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
        threads_.clear();
        tasks_.clear();
    }

    void worker_loop() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [this] { return done_ || !tasks_.empty(); });
                if (done_ && tasks_.empty()) return;
                task = std::move(tasks_.front());
                tasks_.pop_front();
            }
            task();
        }
    }

    std::vector<std::thread> threads_;
    std::deque<std::function<void()>> tasks_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool done_ = false;
};

namespace detail {
inline int& pool_threads() {
    static int n = static_cast<int>(std::thread::hardware_concurrency());
    return n;
}
inline ThreadPool& pool() {
    static ThreadPool p(pool_threads() - 1);
    return p;
}
}  // namespace detail

// Total threads used by kernels (caller thread included). Not concurrently
// callable with running kernels.
inline void set_num_threads(int n) {
    if (n < 1) n = 1;
    detail::pool_threads() = n;
    detail::pool().resize(n - 1);
}

inline int num_threads() { return detail::pool_threads(); }

// Runs fn(begin, end) over a partition of [0, n). fn must only write state
// owned by its own index range.
template <typename F>
void parallel_for(std::int64_t n, F&& fn, std::int64_t grain = 4096) {
    if (n <= 0) return;
    const int nt = num_threads();
    if (nt <= 1 || n <= grain) {
        fn(std::int64_t{0}, n);
        return;
    }
    std::int64_t chunks = (n + grain - 1) / grain;
    if (chunks > nt) chunks = nt;
    const std::int64_t step = (n + chunks - 1) / chunks;

    std::mutex mu;
    std::condition_variable cv;
    std::int64_t pending = chunks - 1;

    for (std::int64_t c = 1; c < chunks; ++c) {
        const std::int64_t b = c * step;
        const std::int64_t e = std::min<std::int64_t>(n, b + step);
        detail::pool().submit([&, b, e] {
            fn(b, e);
            std::lock_guard<std::mutex> lk(mu);
            if (--pending == 0) cv.notify_one();
        });
    }
    fn(std::int64_t{0}, std::min<std::int64_t>(n, step));
    std::unique_lock<std::mutex> lk(mu);
    cv.wait(lk, [&] { return pending == 0; });
}

}  // namespace dcv
