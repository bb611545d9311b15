#ifndef BEASTPIPE_METRICS_HPP_
#define BEASTPIPE_METRICS_HPP_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>

#include "beastpipe/rollout.hpp"
#include "beastpipe/vtrace.hpp"

namespace beastpipe {

struct MetricsRecord {
  std::int64_t step = 0;
  std::int64_t frames = 0;  // step * unroll_length * batch_size
  double mean_episode_return = 0.0;  // NaN until an episode has finished
  std::int64_t episodes = 0;
  LossBundle losses;
  double fps = 0.0;
  std::int64_t version = 0;
  std::int64_t staleness = 0;  // version before the update minus oldest acting version
};

// Sliding window over the most recent episode returns.
class EpisodeTracker {
 public:
  explicit EpisodeTracker(std::size_t window = 100) : window_(window) {}

  void add(double episode_return);
  double mean() const;
  std::int64_t total() const { return total_; }
  std::size_t window_count() const { return returns_.size(); }

 private:
  std::size_t window_;
  std::deque<double> returns_;
  double sum_ = 0.0;
  std::int64_t total_ = 0;
};

// Feeds the tracker with every episode that finished inside the rollout.
// Row 0 is skipped because it repeats the previous rollout's last row, and
// done rows with episode_step 0 only mark the start of a connection.
void collect_episode_returns(const Rollout& rollout, EpisodeTracker& tracker);

// Appends MetricsRecords to a CSV file with the header
// step,frames,mean_episode_return,pg_loss,baseline_loss,entropy_loss,total_loss,fps
class CsvLogger {
 public:
  static constexpr const char* kHeader =
      "step,frames,mean_episode_return,pg_loss,baseline_loss,entropy_loss,total_loss,fps";

  explicit CsvLogger(const std::filesystem::path& path);
  void write(const MetricsRecord& rec);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_METRICS_HPP_
