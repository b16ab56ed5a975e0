#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedhorizon/codec.hpp"

namespace fedhorizon {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  /// "host:port"; throws ConfigError on anything else.
  static Endpoint parse(const std::string& text);
  std::string to_string() const;
};

/// Raised when a peer goes silent past a deadline or the connection drops.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(ErrorCategory::protocol, what) {}
};

using Clock = std::chrono::steady_clock;

/// Connected TCP stream. Move-only; closes on destruction.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept;

  void send_all(std::span<const std::uint8_t> bytes);
  /// Fills `out` completely or throws TransportError at the deadline or on EOF.
  void recv_exact(std::span<std::uint8_t> out, Clock::time_point deadline);

  /// When set, every byte sent or received is appended here.
  void set_tap(std::vector<std::uint8_t>* tap) noexcept { tap_ = tap; }

 private:
  int fd_ = -1;
  std::vector<std::uint8_t>* tap_ = nullptr;
};

class Listener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port. Throws Error(bind).
  explicit Listener(const Endpoint& endpoint, int backlog = 16);
  Listener(Listener&& other) noexcept;
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  ~Listener();

  std::uint16_t port() const noexcept { return port_; }
  /// Next connection, or nullopt once the deadline passes.
  std::optional<Socket> accept(Clock::time_point deadline);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Single connection attempt; throws Error(connect) on failure.
Socket connect_once(const Endpoint& endpoint);

/// Writes one frame.
void send_message(Socket& socket, const Message& msg);
/// Reads one frame and decodes it. Throws TransportError or ProtocolError.
Message receive_message(Socket& socket, Clock::time_point deadline,
                        std::size_t max_frame_bytes = kDefaultMaxFrameBytes);
/// Raw frame bytes, length prefix included, without decoding.
Bytes receive_frame(Socket& socket, Clock::time_point deadline,
                    std::size_t max_frame_bytes = kDefaultMaxFrameBytes);

}  // namespace fedhorizon
