#ifndef BEASTPIPE_BATCHING_QUEUE_HPP_
#define BEASTPIPE_BATCHING_QUEUE_HPP_

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "beastpipe/errors.hpp"
#include "beastpipe/log.hpp"

namespace beastpipe {

// Bounded MPMC FIFO that hands out items in groups of exactly batch_size.
// enqueue() blocks while the queue holds `capacity` items, and blocked
// producers are admitted in arrival order; close() wakes every blocked
// party. Items still queued at close are handed out while
// at least batch_size remain; the residual is dropped (and kept aside for
// take_residual()).
template <typename T>
class BatchingQueue {
 public:
  struct Counters {
    std::int64_t enqueued = 0;
    std::int64_t batched = 0;
    std::int64_t dropped = 0;
  };

  explicit BatchingQueue(std::int64_t batch_size, std::int64_t capacity = 0)
      : batch_size_(batch_size), capacity_(capacity > 0 ? capacity : 2 * batch_size) {
    if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
    if (capacity_ < batch_size_) throw ConfigError("capacity must be >= batch_size");
  }

  BatchingQueue(const BatchingQueue&) = delete;
  BatchingQueue& operator=(const BatchingQueue&) = delete;

  // Throws ClosedError if the queue is (or becomes, while waiting) closed.
  void enqueue(T item) {
    std::unique_lock lock(mu_);
    const std::uint64_t ticket = next_ticket_++;
    can_push_.wait(lock, [&] {
      return closed_ || (ticket == serving_ && static_cast<std::int64_t>(items_.size()) < capacity_);
    });
    if (closed_) throw ClosedError();
    ++serving_;
    items_.push_back(std::move(item));
    ++counters_.enqueued;
    if (static_cast<std::int64_t>(items_.size()) >= batch_size_) can_pop_.notify_one();
    if (static_cast<std::int64_t>(items_.size()) < capacity_) {
      lock.unlock();
      can_push_.notify_all();
    }
  }

  // Returns nullopt at end of stream.
  std::optional<std::vector<T>> next_batch() {
    std::unique_lock lock(mu_);
    can_pop_.wait(lock, [&] {
      return closed_ || static_cast<std::int64_t>(items_.size()) >= batch_size_;
    });
    if (static_cast<std::int64_t>(items_.size()) < batch_size_) {
      drop_residual_locked();
      return std::nullopt;
    }
    std::vector<T> batch;
    batch.reserve(static_cast<std::size_t>(batch_size_));
    for (std::int64_t i = 0; i < batch_size_; ++i) {
      batch.push_back(std::move(items_.front()));
      items_.pop_front();
    }
    counters_.batched += batch_size_;
    lock.unlock();
    can_push_.notify_all();
    can_pop_.notify_one();
    return batch;
  }

  // Idempotent.
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    can_push_.notify_all();
    can_pop_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }
  std::int64_t size() const {
    std::lock_guard lock(mu_);
    return static_cast<std::int64_t>(items_.size());
  }
  // Removes and returns everything still queued plus anything dropped so
  // far. Meant for post-shutdown accounting.
  std::vector<T> take_residual() {
    std::lock_guard lock(mu_);
    std::vector<T> out = std::move(residual_);
    residual_.clear();
    for (auto& item : items_) out.push_back(std::move(item));
    items_.clear();
    return out;
  }

  std::int64_t batch_size() const { return batch_size_; }
  std::int64_t capacity() const { return capacity_; }
  Counters counters() const {
    std::lock_guard lock(mu_);
    return counters_;
  }

 private:
  void drop_residual_locked() {
    if (!items_.empty()) {
      log_info("batching queue closed; dropping " + std::to_string(items_.size()) +
               " residual item(s)");
    }
    counters_.dropped += static_cast<std::int64_t>(items_.size());
    for (auto& item : items_) residual_.push_back(std::move(item));
    items_.clear();
  }

  const std::int64_t batch_size_;
  const std::int64_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable can_push_;
  std::condition_variable can_pop_;
  std::deque<T> items_;
  std::vector<T> residual_;
  bool closed_ = false;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t serving_ = 0;
  Counters counters_;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_BATCHING_QUEUE_HPP_
