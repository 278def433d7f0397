#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rfslam {

/// Fixed-size worker pool with static range partitioning. The partition of
/// [0, n) depends only on n and the pool size, and callers write results by
/// index, so outputs do not depend on scheduling.
class ThreadPool {
 public:
  /// `threads` == 0 selects std::thread::hardware_concurrency().
  explicit ThreadPool(std::size_t threads = 1);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const { return workers_.size() + 1; }

  /// Calls fn(begin, end, worker) on disjoint chunks covering [0, n) and
  /// waits. `worker` is in [0, size()). Exceptions are rethrown here.
  void parallel_for(std::size_t n,
                    const std::function<void(std::size_t, std::size_t,
                                             std::size_t)>& fn);

 private:
  void worker_loop(std::size_t id);

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t, std::size_t, std::size_t)>* job_ = nullptr;
  std::size_t job_n_ = 0;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

/// Thread count from RFSLAM_THREADS, or `fallback` when unset or invalid.
std::size_t default_thread_count(std::size_t fallback = 1);

}  // namespace rfslam
