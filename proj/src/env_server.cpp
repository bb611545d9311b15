#include "beastpipe/env_server.hpp"

#include <sys/socket.h>

#include "beastpipe/log.hpp"

namespace beastpipe {

namespace {

void send_error(FrameChannel& ch, wire::ErrorCode code, const std::string& message) {
  try {
    ch.write(wire::ErrorMsg{code, message});
  } catch (const ConnectError&) {
    // Peer already gone.
  }
}

}  // namespace

void env_session(Socket& conn, std::unique_ptr<Environment> env, const std::atomic<bool>* stopping) {
  FrameChannel ch(conn);
  EpisodeAccounting acct(std::move(env));
  const EnvSpec spec = acct.spec();
  try {
    ch.write(wire::Hello{wire::kProtocolVersion, spec.obs, static_cast<std::uint32_t>(spec.num_actions)});
    ch.write(wire::Step{acct.initial()});
    while (true) {
      std::optional<wire::Message> msg;
      try {
        msg = ch.read();
      } catch (const wire::ProtocolError& e) {
        send_error(ch, wire::ErrorCode::kProtocol, e.what());
        return;
      }
      if (!msg) {
        if (stopping && stopping->load()) {
          try {
            ch.write(wire::Bye{});
          } catch (const ConnectError&) {
          }
        }
        return;
      }
      if (std::holds_alternative<wire::Bye>(*msg)) return;
      const auto* act = std::get_if<wire::Action>(&*msg);
      if (!act) {
        send_error(ch, wire::ErrorCode::kProtocol,
                   std::string("expected ACTION, got ") + wire::type_name(wire::type_of(*msg)));
        return;
      }
      if (act->action < 0 || act->action >= spec.num_actions) {
        send_error(ch, wire::ErrorCode::kInvalidAction,
                   "action " + std::to_string(act->action) + " outside [0, " +
                       std::to_string(spec.num_actions) + ")");
        return;
      }
      ch.write(wire::Step{acct.step(act->action)});
    }
  } catch (const ConnectError& e) {
    log_debug(std::string("session ended: ") + e.what());
  } catch (const std::exception& e) {
    log_error(std::string("session failed: ") + e.what());
    send_error(ch, wire::ErrorCode::kInternal, e.what());
  }
}

EnvServer::EnvServer(HostPort address, EnvFactory factory, int max_connections)
    : address_(std::move(address)), factory_(std::move(factory)), max_connections_(max_connections) {
  if (max_connections_ < 1) throw ConfigError("max_connections must be >= 1");
}

EnvServer::~EnvServer() { stop(); }

void EnvServer::start() {
  if (started_) return;
  listener_ = Listener::bind(address_);
  port_ = listener_.port();
  started_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void EnvServer::reap_finished_locked() {
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if ((*it)->finished.load()) {
      (*it)->thread.join();
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

void EnvServer::accept_loop() {
  while (!stopping_.load()) {
    std::optional<Socket> conn;
    try {
      conn = listener_.accept(std::chrono::milliseconds(50));
    } catch (const ConnectError& e) {
      if (!stopping_.load()) log_error(std::string("accept failed: ") + e.what());
      return;
    }
    std::lock_guard lock(mu_);
    reap_finished_locked();
    if (!conn) continue;
    if (stopping_.load()) return;
    if (stats_.active >= max_connections_) {
      ++stats_.refused;
      FrameChannel ch(*conn);
      send_error(ch, wire::ErrorCode::kServerFull,
                 "server full (" + std::to_string(max_connections_) + " connections)");
      continue;
    }
    std::unique_ptr<Environment> env;
    try {
      env = factory_();
    } catch (const std::exception& e) {
      FrameChannel ch(*conn);
      send_error(ch, wire::ErrorCode::kInternal, e.what());
      continue;
    }
    ++stats_.accepted;
    ++stats_.active;
    auto session = std::make_unique<Session>();
    Session* raw = session.get();
    raw->fd = conn->fd();
    raw->thread = std::thread([this, raw, sock = std::move(*conn), env = std::move(env)]() mutable {
      env_session(sock, std::move(env), &stopping_);
      std::lock_guard lock(mu_);
      raw->fd = -1;
      sock.close();
      --stats_.active;
      raw->finished.store(true);
    });
    sessions_.push_back(std::move(session));
  }
}

void EnvServer::stop() {
  if (!started_ || stopping_.exchange(true)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  listener_.close();
  {
    std::lock_guard lock(mu_);
    for (auto& s : sessions_) {
      if (s->fd >= 0) ::shutdown(s->fd, SHUT_RD);
    }
  }
  for (auto& s : sessions_) {
    if (s->thread.joinable()) s->thread.join();
  }
  sessions_.clear();
}

EnvServer::Stats EnvServer::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace beastpipe
