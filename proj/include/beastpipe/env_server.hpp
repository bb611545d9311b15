#ifndef BEASTPIPE_ENV_SERVER_HPP_
#define BEASTPIPE_ENV_SERVER_HPP_

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "beastpipe/env.hpp"
#include "beastpipe/net.hpp"

namespace beastpipe {

// Server side of one connection: HELLO, the initial STEP, then one STEP per
// ACTION until BYE or disconnect. Protocol violations are answered with an
// ERROR frame before the connection is dropped. If `stopping` is set when
// the client side goes quiet, a BYE is sent first.
void env_session(Socket& conn, std::unique_ptr<Environment> env,
                 const std::atomic<bool>* stopping = nullptr);

// Accept loop that serves each connection on its own thread with a fresh
// environment copy. Connections beyond max_connections get ERROR
// (server full) and are closed.
class EnvServer {
 public:
  struct Stats {
    std::int64_t accepted = 0;
    std::int64_t refused = 0;
    std::int64_t active = 0;
  };

  EnvServer(HostPort address, EnvFactory factory, int max_connections);
  ~EnvServer();
  EnvServer(const EnvServer&) = delete;
  EnvServer& operator=(const EnvServer&) = delete;

  // Binds and starts accepting; throws ConnectError if the bind fails.
  void start();
  // Ends every session with BYE and joins all threads. Idempotent.
  void stop();

  HostPort bound_address() const { return HostPort{address_.host, port_}; }
  std::uint16_t port() const { return port_; }
  Stats stats() const;

 private:
  struct Session {
    std::thread thread;
    std::atomic<bool> finished{false};
    int fd = -1;
  };

  void accept_loop();
  void reap_finished_locked();

  HostPort address_;
  EnvFactory factory_;
  int max_connections_;
  std::uint16_t port_ = 0;

  Listener listener_;
  std::thread accept_thread_;
  std::atomic<bool> stopping_{false};
  bool started_ = false;

  mutable std::mutex mu_;
  std::list<std::unique_ptr<Session>> sessions_;
  Stats stats_;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_ENV_SERVER_HPP_
