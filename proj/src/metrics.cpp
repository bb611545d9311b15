#include "beastpipe/metrics.hpp"

#include <cmath>
#include <limits>

namespace beastpipe {

void EpisodeTracker::add(double episode_return) {
  returns_.push_back(episode_return);
  sum_ += episode_return;
  ++total_;
  if (returns_.size() > window_) {
    sum_ -= returns_.front();
    returns_.pop_front();
  }
}

double EpisodeTracker::mean() const {
  if (returns_.empty()) return std::numeric_limits<double>::quiet_NaN();
  // Recompute to avoid drift in the running sum.
  double s = 0.0;
  for (double r : returns_) s += r;
  return s / static_cast<double>(returns_.size());
}

void collect_episode_returns(const Rollout& rollout, EpisodeTracker& tracker) {
  const auto done = rollout.done.values<std::uint8_t>();
  const auto steps = rollout.episode_step.values<std::int64_t>();
  const auto returns = rollout.episode_return.values<float>();
  for (std::int64_t t = 1; t < rollout.rows(); ++t) {
    if (done[t] && steps[t] > 0) tracker.add(returns[t]);
  }
}

CsvLogger::CsvLogger(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) throw Error("cannot open " + path.string());
  out_.precision(9);
  out_ << kHeader << '\n';
  out_.flush();
}

void CsvLogger::write(const MetricsRecord& rec) {
  std::lock_guard lock(mu_);
  out_ << rec.step << ',' << rec.frames << ',' << rec.mean_episode_return << ','
       << rec.losses.pg_loss << ',' << rec.losses.baseline_loss << ',' << rec.losses.entropy_loss
       << ',' << rec.losses.total << ',' << rec.fps << '\n';
  out_.flush();
}

}  // namespace beastpipe
