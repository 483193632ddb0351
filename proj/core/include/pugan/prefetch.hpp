#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace pugan {

/// Prefetch depth from PUGAN_NUM_WORKERS: unset means 1, 0 disables the
/// background thread, values are capped at 8.
inline int prefetch_workers() {
  const char* env = std::getenv("PUGAN_NUM_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 0) return 1;
  return static_cast<int>(std::min<long>(v, 8));
}

/// Produces items 0..count-1 in order, optionally on a background thread that
/// stays at most `depth` items ahead. Items are handed out as shared pointers
/// to const, so producer and consumer never share mutable state.
template <typename Item>
class BatchQueue {
 public:
  using Make = std::function<Item(std::size_t)>;

  BatchQueue(std::size_t count, Make make, int depth = prefetch_workers())
      : count_(count), make_(std::move(make)), depth_(depth) {
    if (depth_ > 0 && count_ > 0) worker_ = std::thread([this] { run(); });
  }

  ~BatchQueue() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  BatchQueue(const BatchQueue&) = delete;
  BatchQueue& operator=(const BatchQueue&) = delete;

  /// Null once every item has been delivered. Rethrows producer failures.
  std::shared_ptr<const Item> next() {
    if (consumed_ >= count_) return nullptr;
    if (depth_ <= 0) return std::make_shared<const Item>(make_(consumed_++));
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return !ready_.empty() || error_; });
    if (ready_.empty()) std::rethrow_exception(error_);
    auto item = std::move(ready_.front());
    ready_.pop_front();
    ++consumed_;
    lock.unlock();
    cv_.notify_all();
    return item;
  }

 private:
  void run() {
    for (std::size_t i = 0; i < count_; ++i) {
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return stop_ || static_cast<int>(ready_.size()) < depth_; });
        if (stop_) return;
      }
      std::shared_ptr<const Item> item;
      try {
        item = std::make_shared<const Item>(make_(i));
      } catch (...) {
        std::lock_guard lock(mu_);
        error_ = std::current_exception();
        cv_.notify_all();
        return;
      }
      {
        std::lock_guard lock(mu_);
        ready_.push_back(std::move(item));
      }
      cv_.notify_all();
    }
  }

  std::size_t count_;
  Make make_;
  int depth_;
  std::size_t consumed_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::shared_ptr<const Item>> ready_;
  std::exception_ptr error_;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace pugan
