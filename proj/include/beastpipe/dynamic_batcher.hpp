#ifndef BEASTPIPE_DYNAMIC_BATCHER_HPP_
#define BEASTPIPE_DYNAMIC_BATCHER_HPP_

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "beastpipe/ndarray.hpp"

namespace beastpipe {

using ArrayMap = std::map<std::string, NDArray>;

class DynamicBatcher;

// One minibatch handed to an inference consumer. Inputs of all requests are
// concatenated along the batch axis; set_outputs() splits the results back
// along the same axis, one slice per request, in request order.
class BatchHandle {
 public:
  BatchHandle(BatchHandle&&) noexcept = default;
  BatchHandle& operator=(BatchHandle&&) noexcept = default;
  ~BatchHandle();

  const ArrayMap& inputs() const { return inputs_; }
  std::int64_t batch_size() const { return static_cast<std::int64_t>(promises_.size()); }

  // Every array needs the batch axis with exactly batch_size() entries,
  // otherwise DimensionError is thrown and the handle stays open so the
  // caller may retry. A second successful call throws Error.
  void set_outputs(const ArrayMap& outputs);

 private:
  friend class DynamicBatcher;
  BatchHandle(ArrayMap inputs, std::vector<std::promise<ArrayMap>> promises,
              std::int64_t batch_dim, std::atomic<std::int64_t>* delivered);

  ArrayMap inputs_;
  std::vector<std::promise<ArrayMap>> promises_;
  std::int64_t batch_dim_ = 1;
  std::atomic<std::int64_t>* delivered_ = nullptr;
  bool done_ = false;
};

// Many producers submit single-item requests (batch axis of length 1) and
// block; consumers pull whatever is waiting, up to max_batch_size, as one
// BatchHandle. With min_batch_size > 1 a consumer waits up to `timeout`
// for that many requests before taking what is there.
class DynamicBatcher {
 public:
  struct Counters {
    std::int64_t submitted = 0;
    std::int64_t batched = 0;
    std::int64_t dropped = 0;
    std::int64_t delivered = 0;
    std::int64_t batches = 0;
  };

  explicit DynamicBatcher(std::int64_t max_batch_size = 1024, std::int64_t min_batch_size = 1,
                          std::chrono::microseconds timeout = std::chrono::microseconds{0});

  DynamicBatcher(const DynamicBatcher&) = delete;
  DynamicBatcher& operator=(const DynamicBatcher&) = delete;

  // Blocks until a consumer answers. Throws ClosedError if the batcher is
  // closed before the request was taken, or if the taking handle is
  // abandoned without outputs; DimensionError if the inputs disagree with
  // the schema of earlier requests.
  ArrayMap submit(ArrayMap inputs);

  // nullopt once closed and drained.
  std::optional<BatchHandle> next_batch();

  // Idempotent. Pending (not yet batched) requests fail with ClosedError;
  // handles already taken still deliver.
  void close();
  bool closed() const;

  std::int64_t max_batch_size() const { return max_batch_size_; }
  Counters counters() const;

  static constexpr std::int64_t kBatchDim = 1;

 private:
  struct Request {
    ArrayMap inputs;
    std::promise<ArrayMap> promise;
  };

  void check_schema_locked(const ArrayMap& inputs);

  const std::int64_t max_batch_size_;
  const std::int64_t min_batch_size_;
  const std::chrono::microseconds timeout_;

  mutable std::mutex mu_;
  std::condition_variable ready_;
  std::deque<Request> pending_;
  std::optional<std::map<std::string, std::pair<DType, Shape>>> schema_;
  bool closed_ = false;
  Counters counters_;
  std::atomic<std::int64_t> delivered_{0};
};

}  // namespace beastpipe

#endif  // BEASTPIPE_DYNAMIC_BATCHER_HPP_
