// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <thread>
#include <vector>

namespace exdn {
namespace {

// Persistent pool. Every generation is drained by all pool workers plus the
// caller via a shared atomic cursor; run() returns once each worker has
// checked in, so fn stays valid for the whole generation.
class Pool {
 public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  void run(std::size_t n, std::size_t block,
           const std::function<void(std::size_t, std::size_t)>& fn) {
    std::unique_lock<std::mutex> lock(mu_);
    fn_ = &fn;
    total_ = n;
    block_ = block;
    cursor_.store(0, std::memory_order_relaxed);
    active_ = static_cast<int>(workers_.size());
    ++generation_;
    lock.unlock();
    cv_.notify_all();

    drain();

    lock.lock();
    done_cv_.wait(lock, [&] { return active_ == 0; });
    fn_ = nullptr;
  }

 private:
  Pool() {
    // Keep a few workers even on single-core hosts so oversubscribed runs can
    // exercise the parallel path.
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned count = std::max(3u, hw > 1 ? hw - 1 : 3u);
    for (unsigned i = 0; i < count; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }
  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  void drain() {
    for (;;) {
      const std::size_t b = cursor_.fetch_add(block_, std::memory_order_relaxed);
      if (b >= total_) break;
      (*fn_)(b, std::min(total_, b + block_));
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lock(mu_);
      cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      lock.unlock();

      drain();

      lock.lock();
      if (--active_ == 0) {
        lock.unlock();
        done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t, std::size_t)>* fn_ = nullptr;
  std::size_t total_ = 0, block_ = 1;
  std::atomic<std::size_t> cursor_{0};
  int active_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace

int default_thread_count() {
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void parallel_for(std::size_t n, std::size_t block,
                  const std::function<void(std::size_t, std::size_t)>& fn, int threads) {
  if (n == 0) return;
  if (threads <= 0) threads = default_thread_count();
  block = std::max<std::size_t>(1, block);
  if (threads == 1 || n <= block) {
    for (std::size_t b = 0; b < n; b += block) fn(b, std::min(n, b + block));
    return;
  }
  Pool::instance().run(n, block, fn);
}

}  // namespace exdn
