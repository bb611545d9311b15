#include "beastpipe/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace beastpipe {

namespace {

std::string errno_str(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

HostPort parse_host_port(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("address '" + std::string(text) + "' is not HOST:PORT");
  }
  unsigned port = 0;
  const auto digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || port > 65535) {
    throw ConfigError("address '" + std::string(text) + "' has an invalid port");
  }
  return HostPort{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown_read() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RD);
}

void Socket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

bool Socket::read_exact(char* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd_, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw ConnectError("connection closed mid-message");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ConnectError(errno_str("recv"));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void Socket::write_all(std::string_view bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t r = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ConnectError(errno_str("send"));
    }
    sent += static_cast<std::size_t>(r);
  }
}

std::pair<Socket, Socket> socket_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw ConnectError(errno_str("socketpair"));
  return {Socket(fds[0]), Socket(fds[1])};
}

Socket connect_tcp(const HostPort& addr) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(addr.port);
  if (int rc = ::getaddrinfo(addr.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw ConnectError("resolve " + addr.str() + ": " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) {
      last_error = errno_str("socket");
      continue;
    }
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      set_nodelay(s.fd());
      return s;
    }
    last_error = errno_str("connect");
  }
  ::freeaddrinfo(res);
  throw ConnectError(addr.str() + ": " + last_error);
}

Listener Listener::bind(const HostPort& addr, int backlog) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(addr.port);
  const char* host = addr.host.empty() ? nullptr : addr.host.c_str();
  if (int rc = ::getaddrinfo(host, port.c_str(), &hints, &res); rc != 0) {
    throw ConnectError("resolve " + addr.str() + ": " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(s.fd(), backlog) != 0) {
      last_error = errno_str("bind");
      continue;
    }
    sockaddr_storage bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    Listener l;
    l.port_ = ntohs(bound.ss_family == AF_INET6
                        ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                        : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
    l.host_ = addr.host;
    l.sock_ = std::move(s);
    ::freeaddrinfo(res);
    return l;
  }
  ::freeaddrinfo(res);
  throw ConnectError(addr.str() + ": " + last_error);
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  if (!sock_.valid()) throw ConnectError("listener closed");
  pollfd pfd{sock_.fd(), POLLIN, 0};
  const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  if (rc < 0) {
    if (errno == EINTR) return std::nullopt;
    throw ConnectError(errno_str("poll"));
  }
  if (rc == 0) return std::nullopt;
  const int fd = ::accept(sock_.fd(), nullptr, nullptr);
  if (fd < 0) {
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return std::nullopt;
    throw ConnectError(errno_str("accept"));
  }
  set_nodelay(fd);
  return Socket(fd);
}

std::optional<wire::Message> FrameChannel::read(const ObsSpec* expected_obs) {
  char header[4];
  if (!sock_.read_exact(header, 4)) return std::nullopt;
  std::uint32_t len;
  std::memcpy(&len, header, 4);
  if (len > wire::kMaxFrameBytes) {
    throw wire::ProtocolError(wire::ProtocolError::Kind::kOversize,
                              "declared frame length " + std::to_string(len) + " exceeds limit");
  }
  if (len == 0) {
    throw wire::ProtocolError(wire::ProtocolError::Kind::kTruncated, "frame without msg_type");
  }
  std::string body(len, '\0');
  if (!sock_.read_exact(body.data(), len)) throw ConnectError("connection closed mid-frame");
  return wire::decode_body(body, expected_obs);
}

void FrameChannel::write(const wire::Message& msg) { sock_.write_all(wire::encode_frame(msg)); }

}  // namespace beastpipe
