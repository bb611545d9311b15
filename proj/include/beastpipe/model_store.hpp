#ifndef BEASTPIPE_MODEL_STORE_HPP_
#define BEASTPIPE_MODEL_STORE_HPP_

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>

#include "beastpipe/model.hpp"

namespace beastpipe {

// Parameters shared between acting and learning threads. Readers take
// immutable snapshots; optimizer steps are applied one at a time to a copy
// that is then published, so a snapshot never changes under its reader.
class ModelStore {
 public:
  ModelStore(ModelParams params, RmsPropState optimizer);

  std::shared_ptr<const ModelParams> snapshot() const;
  std::int64_t version() const;

  // Exclusive RMSProp step. Returns the new version.
  std::int64_t apply_gradients(const GradientSet& grads);

  // Blocks until version() >= v or interrupt() is called. Returns false
  // when interrupted.
  bool wait_for_version(std::int64_t v) const;
  void interrupt();

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable published_;
  std::shared_ptr<const ModelParams> current_;
  std::mutex update_mu_;
  RmsPropState optimizer_;
  bool interrupted_ = false;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_MODEL_STORE_HPP_
