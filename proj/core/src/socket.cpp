#include "fedhorizon/socket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace fedhorizon {

Endpoint Endpoint::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("endpoint '" + text + "' is not HOST:PORT");
  }
  Endpoint ep;
  ep.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  try {
    std::size_t used = 0;
    const long value = std::stol(port, &used);
    if (used != port.size() || value < 0 || value > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(value);
  } catch (const std::exception&) {
    throw ConfigError("endpoint '" + text + "' has an invalid port");
  }
  return ep;
}

std::string Endpoint::to_string() const { return host + ":" + std::to_string(port); }

namespace {

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  if (left.count() <= 0) return 0;
  return left.count() > 1'000'000'000 ? 1'000'000'000 : static_cast<int>(left.count());
}

struct AddrInfo {
  addrinfo* head = nullptr;
  ~AddrInfo() {
    if (head) freeaddrinfo(head);
  }
};

AddrInfo resolve(const Endpoint& ep, bool passive, ErrorCategory category) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  AddrInfo info;
  const std::string port = std::to_string(ep.port);
  const int rc = getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &info.head);
  if (rc != 0) throw Error(category, "cannot resolve " + ep.to_string() + ": " + gai_strerror(rc));
  return info;
}

}  // namespace

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_), tap_(other.tap_) {
  other.fd_ = -1;
  other.tap_ = nullptr;
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    tap_ = other.tap_;
    other.fd_ = -1;
    other.tap_ = nullptr;
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  if (tap_) tap_->insert(tap_->end(), bytes.begin(), bytes.end());
}

void Socket::recv_exact(std::span<std::uint8_t> out, Clock::time_point deadline) {
  std::size_t got = 0;
  while (got < out.size()) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) throw TransportError("timed out waiting for peer");
    const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("recv failed: ") + std::strerror(errno));
    }
    if (n == 0) throw TransportError("connection closed by peer");
    got += static_cast<std::size_t>(n);
  }
  if (tap_) tap_->insert(tap_->end(), out.begin(), out.end());
}

Listener::Listener(const Endpoint& endpoint, int backlog) {
  const auto info = resolve(endpoint, true, ErrorCategory::bind);
  std::string last_error = "no usable address";
  for (addrinfo* ai = info.head; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, backlog) == 0) {
      sockaddr_storage addr{};
      socklen_t len = sizeof(addr);
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
      port_ = ntohs(addr.ss_family == AF_INET6
                        ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                        : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
      fd_ = fd;
      return;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  throw Error(ErrorCategory::bind, "cannot listen on " + endpoint.to_string() + ": " + last_error);
}

Listener::Listener(Listener&& other) noexcept : fd_(other.fd_), port_(other.port_) {
  other.fd_ = -1;
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<Socket> Listener::accept(Clock::time_point deadline) {
  while (true) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) return std::nullopt;
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      throw TransportError(std::string("accept failed: ") + std::strerror(errno));
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return Socket(fd);
  }
}

Socket connect_once(const Endpoint& endpoint) {
  const auto info = resolve(endpoint, false, ErrorCategory::connect);
  std::string last_error = "no usable address";
  for (addrinfo* ai = info.head; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return Socket(fd);
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  throw Error(ErrorCategory::connect, "cannot connect to " + endpoint.to_string() + ": " + last_error);
}

void send_message(Socket& socket, const Message& msg) {
  const Bytes frame = encode_message(msg);
  socket.send_all(frame);
}

Bytes receive_frame(Socket& socket, Clock::time_point deadline, std::size_t max_frame_bytes) {
  Bytes frame(kFrameHeaderBytes);
  socket.recv_exact(frame, deadline);
  const std::size_t length = frame_payload_length(frame, max_frame_bytes);
  frame.resize(kFrameHeaderBytes + length);
  socket.recv_exact(std::span(frame).subspan(kFrameHeaderBytes), deadline);
  return frame;
}

Message receive_message(Socket& socket, Clock::time_point deadline, std::size_t max_frame_bytes) {
  const Bytes frame = receive_frame(socket, deadline, max_frame_bytes);
  return decode_message(frame, max_frame_bytes);
}

}  // namespace fedhorizon
