#include "rfslam/thread_pool.hpp"

#include <cstdlib>
#include <exception>
#include <string>

namespace rfslam {

namespace {

std::pair<std::size_t, std::size_t> chunk(std::size_t n, std::size_t parts,
                                          std::size_t k) {
  return {n * k / parts, n * (k + 1) / parts};
}

}  // namespace

ThreadPool::ThreadPool(std::size_t threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  workers_.reserve(threads - 1);
  for (std::size_t i = 1; i < threads; ++i)
    workers_.emplace_back([this, i] { worker_loop(i); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void ThreadPool::worker_loop(std::size_t id) {
  std::size_t seen = 0;
  for (;;) {
    const std::function<void(std::size_t, std::size_t, std::size_t)>* job;
    std::size_t n;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      job = job_;
      n = job_n_;
    }
    const auto [b, e] = chunk(n, size(), id);
    try {
      if (b < e) (*job)(b, e, id);
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
    {
      std::lock_guard lock(mu_);
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }
}

void ThreadPool::parallel_for(
    std::size_t n,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (workers_.empty()) {
    fn(0, n, 0);
    return;
  }
  {
    std::lock_guard lock(mu_);
    job_ = &fn;
    job_n_ = n;
    pending_ = workers_.size();
    error_ = nullptr;
    ++generation_;
  }
  cv_.notify_all();
  std::exception_ptr local;
  const auto [b, e] = chunk(n, size(), 0);
  try {
    if (b < e) fn(b, e, 0);
  } catch (...) {
    local = std::current_exception();
  }
  std::unique_lock lock(mu_);
  done_cv_.wait(lock, [&] { return pending_ == 0; });
  job_ = nullptr;
  if (local) std::rethrow_exception(local);
  if (error_) std::rethrow_exception(error_);
}

std::size_t default_thread_count(std::size_t fallback) {
  const char* env = std::getenv("RFSLAM_THREADS");
  if (!env) return fallback;
  try {
    const long v = std::stol(env);
    if (v >= 1 && v <= 1024) return static_cast<std::size_t>(v);
  } catch (...) {
  }
  return fallback;
}

}  // namespace rfslam
