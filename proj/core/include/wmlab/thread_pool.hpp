#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace wmlab {

// Work-sharing pool for deterministic data parallelism. Tasks write disjoint
// output ranges, so the schedule cannot influence results. parallel_for from
// inside a parallel region runs inline (no nested parallelism), and
// concurrent top-level callers fall back to serial execution rather than
// fighting over the pool.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  // Global worker count; 1 = serial. Clamped to hardware_concurrency.
  // Must not be called while a parallel_for is in flight.
  static void set_threads(int n);
  static int threads() { return instance().n_workers_ + 1; }

  // fn(i) for i in [0, n); blocks until done
  static void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

  ~ThreadPool() { shutdown(); }

 private:
  ThreadPool() = default;
  void start(int workers);
  void shutdown();
  void worker_loop();

  std::vector<std::thread> workers_;
  int n_workers_ = 0;

  std::mutex mu_;
  std::mutex dispatch_mu_;
  std::condition_variable cv_job_, cv_done_;
  const std::function<void(int64_t)>* job_ = nullptr;
  int64_t job_n_ = 0;
  std::atomic<int64_t> next_{0};
  std::atomic<int> active_{0};
  uint64_t epoch_ = 0;
  bool stop_ = false;

  static thread_local bool in_worker_;
};

inline thread_local bool ThreadPool::in_worker_ = false;

inline void ThreadPool::start(int workers) {
  for (int i = 0; i < workers; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
  n_workers_ = workers;
}

inline void ThreadPool::shutdown() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    stop_ = true;
  }
  cv_job_.notify_all();
  for (auto& t : workers_) t.join();
  workers_.clear();
  n_workers_ = 0;
}

inline void ThreadPool::set_threads(int n) {
  ThreadPool& p = instance();
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  int workers = n - 1;
  if (workers > hw - 1) workers = hw - 1;
  if (workers < 0) workers = 0;
  if (workers == p.n_workers_) return;
  p.shutdown();
  {
    std::lock_guard<std::mutex> lk(p.mu_);
    p.stop_ = false;
  }
  p.start(workers);
}

inline void ThreadPool::worker_loop() {
  in_worker_ = true;
  uint64_t seen = 0;
  for (;;) {
    const std::function<void(int64_t)>* job = nullptr;
    int64_t n = 0;
    {
      std::unique_lock<std::mutex> lk(mu_);
      cv_job_.wait(lk, [&] { return stop_ || (epoch_ != seen && job_ != nullptr); });
      if (stop_) return;
      seen = epoch_;
      job = job_;
      n = job_n_;
      active_.fetch_add(1);
    }
    for (;;) {
      int64_t i = next_.fetch_add(1);
      if (i >= n) break;
      (*job)(i);
    }
    if (active_.fetch_sub(1) == 1) {
      std::lock_guard<std::mutex> lk(mu_);
      cv_done_.notify_all();
    }
  }
}

inline void ThreadPool::parallel_for(int64_t n,
                                     const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  ThreadPool& p = instance();
  if (p.n_workers_ == 0 || in_worker_ || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (!p.dispatch_mu_.try_lock()) {
    // another thread owns the pool right now; stay correct, run serial
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::lock_guard<std::mutex> dispatch(p.dispatch_mu_, std::adopt_lock);
  {
    std::lock_guard<std::mutex> lk(p.mu_);
    p.job_ = &fn;
    p.job_n_ = n;
    p.next_.store(0);
    ++p.epoch_;
  }
  p.cv_job_.notify_all();
  // caller participates; nested parallel_for from here runs inline
  in_worker_ = true;
  for (;;) {
    int64_t i = p.next_.fetch_add(1);
    if (i >= n) break;
    fn(i);
  }
  in_worker_ = false;
  {
    std::unique_lock<std::mutex> lk(p.mu_);
    p.cv_done_.wait(lk, [&] { return p.active_.load() == 0; });
    p.job_ = nullptr;  // late wakers see null and keep waiting
  }
}

}  // namespace wmlab
