#include "resdepth/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace resdepth {

namespace {

int g_thread_count = 0; // 0 = uninitialized, resolve lazily

int resolve_default() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Persistent pool. Workers wait for a generation bump, claim their fixed
// chunk, and signal completion. The calling thread always runs chunk 0.
class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    void run(int workers, std::size_t n,
             const std::function<void(int, std::size_t, std::size_t)>& fn) {
        ensure_workers(workers - 1);
        {
            std::unique_lock<std::mutex> lock(mutex_);
            fn_ = &fn;
            total_workers_ = workers;
            items_ = n;
            pending_ = workers - 1;
            ++generation_;
        }
        cv_start_.notify_all();
        run_chunk(0);
        if (workers > 1) {
            std::unique_lock<std::mutex> lock(mutex_);
            cv_done_.wait(lock, [this] { return pending_ == 0; });
        }
        fn_ = nullptr;
    }

private:
    Pool() = default;
    ~Pool() {
        {
            std::unique_lock<std::mutex> lock(mutex_);
            stop_ = true;
        }
        cv_start_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void ensure_workers(int count) {
        while (static_cast<int>(threads_.size()) < count) {
            const int worker = static_cast<int>(threads_.size()) + 1;
            threads_.emplace_back([this, worker] { worker_loop(worker); });
        }
    }

    void worker_loop(int worker) {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                // pending_ only counts workers below total_workers_.
                if (worker >= total_workers_) continue;
            }
            run_chunk(worker);
            {
                std::unique_lock<std::mutex> lock(mutex_);
                if (--pending_ == 0) cv_done_.notify_one();
            }
        }
    }

    void run_chunk(int worker) {
        const std::size_t n = items_;
        const int w = total_workers_;
        const std::size_t base = n / w;
        const std::size_t rem = n % w;
        const std::size_t begin = static_cast<std::size_t>(worker) * base +
                                  std::min<std::size_t>(worker, rem);
        const std::size_t len = base + (static_cast<std::size_t>(worker) < rem ? 1 : 0);
        if (len > 0) (*fn_)(worker, begin, begin + len);
    }

    std::mutex mutex_;
    std::condition_variable cv_start_;
    std::condition_variable cv_done_;
    std::vector<std::thread> threads_;
    const std::function<void(int, std::size_t, std::size_t)>* fn_ = nullptr;
    std::uint64_t generation_ = 0;
    int total_workers_ = 1;
    std::size_t items_ = 0;
    int pending_ = 0;
    bool stop_ = false;
};

} // namespace

void set_thread_count(int n) { g_thread_count = n < 1 ? 1 : n; }

int thread_count() {
    if (g_thread_count == 0) g_thread_count = resolve_default();
    return g_thread_count;
}

int parallel_workers(std::size_t n) {
    const int t = thread_count();
    const std::size_t w = n < static_cast<std::size_t>(t) ? n : static_cast<std::size_t>(t);
    return w == 0 ? 1 : static_cast<int>(w);
}

void parallel_for(std::size_t n,
                  const std::function<void(int, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const int workers = parallel_workers(n);
    if (workers == 1) {
        fn(0, 0, n);
        return;
    }
    Pool::instance().run(workers, n, fn);
}

} // namespace resdepth
