#include "beastpipe/dynamic_batcher.hpp"

#include "beastpipe/log.hpp"

namespace beastpipe {

BatchHandle::BatchHandle(ArrayMap inputs, std::vector<std::promise<ArrayMap>> promises,
                         std::int64_t batch_dim, std::atomic<std::int64_t>* delivered)
    : inputs_(std::move(inputs)),
      promises_(std::move(promises)),
      batch_dim_(batch_dim),
      delivered_(delivered) {}

BatchHandle::~BatchHandle() {
  if (!done_ && !promises_.empty()) {
    log_warn("inference batch of " + std::to_string(promises_.size()) +
             " abandoned without outputs");
    for (auto& p : promises_) p.set_exception(std::make_exception_ptr(ClosedError()));
  }
}

void BatchHandle::set_outputs(const ArrayMap& outputs) {
  if (done_) throw Error("set_outputs called twice on the same batch");
  const auto n = batch_size();
  for (const auto& [key, arr] : outputs) {
    if (arr.ndim() <= batch_dim_ || arr.dim(batch_dim_) != n) {
      throw DimensionError("output '" + key + "' has dims " + shape_str(arr.dims()) +
                           "; batch axis " + std::to_string(batch_dim_) + " must have length " +
                           std::to_string(n));
    }
  }
  for (std::int64_t i = 0; i < n; ++i) {
    ArrayMap mine;
    for (const auto& [key, arr] : outputs) mine.emplace(key, arr.slice(batch_dim_, i, 1));
    promises_[static_cast<std::size_t>(i)].set_value(std::move(mine));
  }
  done_ = true;
  if (delivered_) delivered_->fetch_add(n, std::memory_order_relaxed);
}

DynamicBatcher::DynamicBatcher(std::int64_t max_batch_size, std::int64_t min_batch_size,
                               std::chrono::microseconds timeout)
    : max_batch_size_(max_batch_size), min_batch_size_(min_batch_size), timeout_(timeout) {
  if (max_batch_size_ < 1) throw ConfigError("max_batch_size must be >= 1");
  if (min_batch_size_ < 1 || min_batch_size_ > max_batch_size_) {
    throw ConfigError("min_batch_size must lie in [1, max_batch_size]");
  }
}

void DynamicBatcher::check_schema_locked(const ArrayMap& inputs) {
  if (inputs.empty()) throw DimensionError("empty inference request");
  std::map<std::string, std::pair<DType, Shape>> schema;
  for (const auto& [key, arr] : inputs) {
    if (arr.ndim() <= kBatchDim || arr.dim(kBatchDim) != 1) {
      throw DimensionError("input '" + key + "' must have a size-1 batch axis at dim " +
                           std::to_string(kBatchDim) + ", got " + shape_str(arr.dims()));
    }
    schema.emplace(key, std::make_pair(arr.dtype(), arr.dims()));
  }
  if (!schema_) {
    schema_ = std::move(schema);
  } else if (*schema_ != schema) {
    throw DimensionError("inference request schema differs from earlier requests");
  }
}

ArrayMap DynamicBatcher::submit(ArrayMap inputs) {
  std::future<ArrayMap> result;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw ClosedError();
    check_schema_locked(inputs);
    Request req{std::move(inputs), {}};
    result = req.promise.get_future();
    pending_.push_back(std::move(req));
    ++counters_.submitted;
  }
  ready_.notify_one();
  return result.get();
}

std::optional<BatchHandle> DynamicBatcher::next_batch() {
  std::unique_lock lock(mu_);
  ready_.wait(lock, [&] { return closed_ || !pending_.empty(); });
  if (pending_.empty()) return std::nullopt;
  if (min_batch_size_ > 1 && timeout_.count() > 0) {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    ready_.wait_until(lock, deadline, [&] {
      return closed_ || static_cast<std::int64_t>(pending_.size()) >= min_batch_size_;
    });
    if (pending_.empty()) return std::nullopt;
  }

  const auto n = std::min<std::int64_t>(max_batch_size_, static_cast<std::int64_t>(pending_.size()));
  std::vector<std::promise<ArrayMap>> promises;
  std::map<std::string, std::vector<NDArray>> columns;
  promises.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    Request& req = pending_.front();
    for (auto& [key, arr] : req.inputs) columns[key].push_back(std::move(arr));
    promises.push_back(std::move(req.promise));
    pending_.pop_front();
  }
  counters_.batched += n;
  ++counters_.batches;
  const bool more = !pending_.empty();
  lock.unlock();
  if (more) ready_.notify_one();

  ArrayMap stacked;
  for (auto& [key, parts] : columns) stacked.emplace(key, concat(parts, kBatchDim));
  return BatchHandle(std::move(stacked), std::move(promises), kBatchDim, &delivered_);
}

void DynamicBatcher::close() {
  std::deque<Request> orphaned;
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    closed_ = true;
    orphaned.swap(pending_);
    counters_.dropped += static_cast<std::int64_t>(orphaned.size());
  }
  ready_.notify_all();
  for (auto& req : orphaned) req.promise.set_exception(std::make_exception_ptr(ClosedError()));
}

bool DynamicBatcher::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

DynamicBatcher::Counters DynamicBatcher::counters() const {
  std::lock_guard lock(mu_);
  Counters c = counters_;
  c.delivered = delivered_.load();
  return c;
}

}  // namespace beastpipe
