#ifndef BEASTPIPE_NET_HPP_
#define BEASTPIPE_NET_HPP_

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "beastpipe/wire.hpp"

namespace beastpipe {

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
  std::string str() const { return host + ":" + std::to_string(port); }
};

// "HOST:PORT"; throws ConfigError on malformed input.
HostPort parse_host_port(std::string_view text);

// Owning socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close();
  // Wakes a thread blocked in read on this socket (it then sees EOF).
  void shutdown_read();
  void shutdown_both();

  // Returns false on orderly EOF before the first byte; throws
  // ConnectError on EOF mid-buffer or socket errors.
  bool read_exact(char* buf, std::size_t n);
  void write_all(std::string_view bytes);

 private:
  int fd_ = -1;
};

// Connected pair for in-process sessions and tests.
std::pair<Socket, Socket> socket_pair();

Socket connect_tcp(const HostPort& addr);

class Listener {
 public:
  // Binds with SO_REUSEADDR; port 0 picks an ephemeral port.
  static Listener bind(const HostPort& addr, int backlog = 64);

  std::uint16_t port() const { return port_; }
  const std::string& host() const { return host_; }

  // Waits up to `timeout`; nullopt on timeout.
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  std::string host_;
  std::uint16_t port_ = 0;
};

// Reads and writes whole protocol frames on a borrowed socket.
class FrameChannel {
 public:
  explicit FrameChannel(Socket& sock) : sock_(sock) {}

  // nullopt on orderly EOF at a frame boundary.
  std::optional<wire::Message> read(const ObsSpec* expected_obs = nullptr);
  void write(const wire::Message& msg);

  Socket& socket() { return sock_; }

 private:
  Socket& sock_;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_NET_HPP_
