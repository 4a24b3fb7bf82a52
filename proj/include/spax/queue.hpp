#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>

namespace spax {

// Bounded handoff queue for producer/consumer pipelines. pop() returns
// nullopt once the queue is closed and drained.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    std::unique_lock lock(mu_);
    cv_space_.wait(lock,
                   [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return;
    items_.push_back(std::move(item));
    cv_item_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_item_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    cv_space_.notify_one();
    return item;
  }

  void close() {
    std::unique_lock lock(mu_);
    closed_ = true;
    cv_item_.notify_all();
    cv_space_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_item_;
  std::condition_variable cv_space_;
  std::deque<T> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

}  // namespace spax
