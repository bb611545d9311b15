#include "beastpipe/actor_pool.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <limits>

#include "beastpipe/log.hpp"

namespace beastpipe {

namespace {

std::chrono::milliseconds backoff(std::int64_t attempt) {
  const std::int64_t ms = 50LL << std::min<std::int64_t>(attempt, 5);
  return std::chrono::milliseconds(std::min<std::int64_t>(ms, 1000));
}

}  // namespace

void inference_loop(const ModelStore& store, DynamicBatcher& batcher, std::uint64_t seed,
                    bool greedy) {
  std::mt19937_64 rng(seed);
  while (auto handle = batcher.next_batch()) {
    const NDArray& obs = handle->inputs().at("observation");
    const auto n = obs.dim(1);
    const auto params = store.snapshot();
    const MlpOutput out = mlp_forward(*params, obs.reshaped({n, obs.size() / n}));
    const auto actions = greedy ? argmax_rows(out.logits) : sample_rows(out.logits, rng);

    ArrayMap outputs;
    NDArray action(DType::kInt64, {1, n});
    NDArray version(DType::kInt64, {1, n});
    auto av = action.values<std::int64_t>();
    auto vv = version.values<std::int64_t>();
    for (std::int64_t i = 0; i < n; ++i) {
      av[i] = actions[i];
      vv[i] = params->version;
    }
    outputs["action"] = std::move(action);
    outputs["version"] = std::move(version);
    outputs["policy_logits"] =
        out.logits.astype(DType::kFloat32).reshaped({1, n, params->num_actions()});
    outputs["baseline"] = out.baseline.astype(DType::kFloat32).reshaped({1, n});
    handle->set_outputs(outputs);
  }
}

ArrayMap make_inference_request(const EnvOutput& env) {
  Shape dims{1, 1};
  for (auto d : env.observation.dims()) dims.push_back(d);
  ArrayMap req;
  req["observation"] = env.observation.reshaped(dims);
  req["reward"] = NDArray::from<float>({1, 1}, {env.reward});
  req["done"] = NDArray::from<std::uint8_t>({1, 1}, {static_cast<std::uint8_t>(env.done)});
  return req;
}

AgentReply parse_inference_reply(const ArrayMap& reply) {
  AgentReply r;
  r.output.action = reply.at("action").values<std::int64_t>()[0];
  const NDArray& logits = reply.at("policy_logits");
  r.output.policy_logits = logits.reshaped({logits.size()});
  r.output.baseline = reply.at("baseline").values<float>()[0];
  r.version = reply.at("version").values<std::int64_t>()[0];
  return r;
}

Socket connect_with_retry(const HostPort& addr, std::int64_t retries,
                          const std::atomic<bool>* stopping) {
  for (std::int64_t attempt = 0;; ++attempt) {
    try {
      return connect_tcp(addr);
    } catch (const ConnectError& e) {
      if (attempt >= retries || (stopping && stopping->load())) {
        throw ConnectError(addr.str() + " unreachable after " + std::to_string(attempt + 1) +
                           " attempt(s): " + e.what());
      }
      log_debug(std::string("connect failed, retrying: ") + e.what());
    }
    std::this_thread::sleep_for(backoff(attempt));
  }
}

EnvSpec read_hello(FrameChannel& ch) {
  auto msg = ch.read();
  if (!msg) throw ConnectError("connection closed before HELLO");
  if (auto* err = std::get_if<wire::ErrorMsg>(&*msg)) {
    throw ConnectError("server refused connection (code " +
                       std::to_string(static_cast<std::uint32_t>(err->code)) + "): " +
                       err->message);
  }
  auto* hello = std::get_if<wire::Hello>(&*msg);
  if (!hello) {
    throw wire::ProtocolError(wire::ProtocolError::Kind::kUnexpected,
                              std::string("expected HELLO, got ") +
                                  wire::type_name(wire::type_of(*msg)));
  }
  if (hello->version != wire::kProtocolVersion) {
    throw wire::ProtocolError(wire::ProtocolError::Kind::kBadValue,
                              "unsupported protocol version " + std::to_string(hello->version));
  }
  return EnvSpec{hello->obs, static_cast<std::int64_t>(hello->num_actions)};
}

EnvSpec probe_env_spec(const HostPort& addr, std::int64_t retries) {
  Socket sock = connect_with_retry(addr, retries);
  FrameChannel ch(sock);
  const EnvSpec spec = read_hello(ch);
  try {
    ch.write(wire::Bye{});
  } catch (const ConnectError&) {
  }
  return spec;
}

ActorPool::ActorPool(std::int64_t num_actors, std::int64_t unroll_length,
                     std::vector<HostPort> addresses, EnvSpec expected_spec,
                     BatchingQueue<Rollout>& learner_queue, DynamicBatcher& inference,
                     std::int64_t connect_retries)
    : num_actors_(num_actors),
      unroll_length_(unroll_length),
      addresses_(std::move(addresses)),
      spec_(std::move(expected_spec)),
      learner_queue_(learner_queue),
      inference_(inference),
      connect_retries_(connect_retries),
      fds_(static_cast<std::size_t>(num_actors), -1) {
  if (num_actors_ < 1) throw ConfigError("num_actors must be >= 1");
  if (addresses_.empty()) throw ConfigError("server_addresses must not be empty");
}

ActorPool::~ActorPool() { stop(); }

void ActorPool::start() {
  for (std::int64_t i = 0; i < num_actors_; ++i) {
    threads_.emplace_back([this, i] { run_actor(i); });
  }
}

void ActorPool::stop() {
  stopping_ = true;
  {
    std::lock_guard lock(mu_);
    for (int fd : fds_) {
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    }
  }
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

bool ActorPool::all_failed() const {
  std::lock_guard lock(mu_);
  return stats_.failed_actors == num_actors_;
}

ActorPool::Stats ActorPool::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void ActorPool::register_socket(std::int64_t index, int fd) {
  std::lock_guard lock(mu_);
  fds_[static_cast<std::size_t>(index)] = fd;
  if (fd >= 0 && stopping_) ::shutdown(fd, SHUT_RDWR);
}

void ActorPool::run_actor(std::int64_t index) {
  const HostPort& addr = addresses_[static_cast<std::size_t>(index) % addresses_.size()];
  std::int64_t consecutive_failures = 0;
  while (!stopping_) {
    Socket sock;
    try {
      sock = connect_with_retry(addr, connect_retries_, &stopping_);
    } catch (const ConnectError& e) {
      if (stopping_) return;
      log_error("actor " + std::to_string(index) + ": " + e.what());
      bool last;
      {
        std::lock_guard lock(mu_);
        last = ++stats_.failed_actors == num_actors_;
      }
      if (last) learner_queue_.close();
      return;
    }
    register_socket(index, sock.fd());
    bool fatal = false;
    try {
      session(index, sock);
    } catch (const ClosedError&) {
      fatal = true;
    } catch (const wire::ProtocolError& e) {
      if (!stopping_) log_warn("actor " + std::to_string(index) + ": " + e.what());
      if (e.kind() == wire::ProtocolError::Kind::kSpecMismatch) fatal = true;
    } catch (const ConnectError& e) {
      if (!stopping_) log_warn("actor " + std::to_string(index) + ": " + e.what());
    }
    register_socket(index, -1);
    sock.close();
    if (fatal || stopping_) return;
    {
      std::lock_guard lock(mu_);
      ++stats_.reconnects;
    }
    std::this_thread::sleep_for(backoff(consecutive_failures++));
  }
}

void ActorPool::session(std::int64_t index, Socket& sock) {
  FrameChannel ch(sock);
  const EnvSpec spec = read_hello(ch);
  if (!(spec == spec_)) {
    throw wire::ProtocolError(wire::ProtocolError::Kind::kSpecMismatch,
                              "server " + addresses_[index % addresses_.size()].str() +
                                  " advertises a different environment spec");
  }
  const auto no_version = std::numeric_limits<std::int64_t>::max();
  Rollout rollout(unroll_length_, spec_.obs, spec_.num_actions);
  std::int64_t t = 0;
  std::int64_t min_version = no_version;
  try {
    for (;;) {
      auto msg = ch.read(&spec_.obs);
      if (!msg) throw ConnectError("server closed the connection");
      if (std::holds_alternative<wire::Bye>(*msg)) throw ConnectError("server said BYE");
      if (auto* err = std::get_if<wire::ErrorMsg>(&*msg)) {
        throw ConnectError("server error: " + err->message);
      }
      auto* step = std::get_if<wire::Step>(&*msg);
      if (!step) {
        throw wire::ProtocolError(wire::ProtocolError::Kind::kUnexpected,
                                  std::string("expected STEP, got ") +
                                      wire::type_name(wire::type_of(*msg)));
      }
      const AgentReply reply = parse_inference_reply(inference_.submit(make_inference_request(step->output)));
      rollout.set_row(t, step->output, reply.output);
      min_version = std::min(min_version, reply.version);
      ch.write(wire::Action{reply.output.action});
      {
        std::lock_guard lock(mu_);
        ++stats_.frames;
      }
      if (t == unroll_length_) {
        Rollout next(unroll_length_, spec_.obs, spec_.num_actions);
        next.set_row(0, step->output, reply.output);
        rollout.model_version = min_version;
        rollout.id = next_rollout_id_.fetch_add(1);
        learner_queue_.enqueue(std::move(rollout));
        {
          std::lock_guard lock(mu_);
          ++stats_.rollouts;
        }
        rollout = std::move(next);
        min_version = reply.version;
        t = 1;
      } else {
        ++t;
      }
    }
  } catch (const ClosedError&) {
    throw;
  } catch (...) {
    if (t > 1) {
      std::lock_guard lock(mu_);
      ++stats_.discarded_partials;
    }
    throw;
  }
}

}  // namespace beastpipe
