#include "beastpipe/model_store.hpp"

namespace beastpipe {

ModelStore::ModelStore(ModelParams params, RmsPropState optimizer)
    : current_(std::make_shared<const ModelParams>(std::move(params))),
      optimizer_(std::move(optimizer)) {
  current_->check_shapes();
}

std::shared_ptr<const ModelParams> ModelStore::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

std::int64_t ModelStore::version() const {
  std::lock_guard lock(mu_);
  return current_->version;
}

std::int64_t ModelStore::apply_gradients(const GradientSet& grads) {
  std::lock_guard update(update_mu_);
  auto next = std::make_shared<ModelParams>(*snapshot());
  rmsprop_step(*next, grads, optimizer_);
  const auto v = next->version;
  {
    std::lock_guard lock(mu_);
    current_ = std::move(next);
  }
  published_.notify_all();
  return v;
}

bool ModelStore::wait_for_version(std::int64_t v) const {
  std::unique_lock lock(mu_);
  published_.wait(lock, [&] { return interrupted_ || current_->version >= v; });
  return current_->version >= v;
}

void ModelStore::interrupt() {
  {
    std::lock_guard lock(mu_);
    interrupted_ = true;
  }
  published_.notify_all();
}

}  // namespace beastpipe
