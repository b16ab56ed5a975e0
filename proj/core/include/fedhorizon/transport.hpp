#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedhorizon/codec.hpp"
#include "fedhorizon/federation.hpp"
#include "fedhorizon/socket.hpp"

namespace fedhorizon {

/// Node side of the protocol, independent of how bytes move.
///
/// JOIN announces the node id, N_k, and feature length. Each GLOBAL_MODEL is
/// answered with one LOCAL_UPDATE produced by train_local; ROUND_RESULT is
/// acknowledged silently; SHUTDOWN ends the session. The session never puts
/// records or features on the wire.
class NodeSession {
 public:
  NodeSession(std::string node_id, std::vector<Example> examples);

  const std::string& node_id() const noexcept { return node_id_; }
  std::uint64_t num_samples() const noexcept { return examples_.size(); }
  bool finished() const noexcept { return finished_; }
  std::size_t rounds_trained() const noexcept { return rounds_trained_; }

  Message join_message() const;
  /// Reply to send back, if any. Throws Error when the coordinator sends
  /// ERROR or something out of protocol.
  std::optional<Message> handle(const Message& msg);

 private:
  std::string node_id_;
  std::vector<Example> examples_;
  std::size_t feature_dim_ = 0;
  bool finished_ = false;
  std::size_t rounds_trained_ = 0;
};

/// Coordinator's view of one connected node.
class NodeLink {
 public:
  virtual ~NodeLink() = default;
  virtual void send(const Message& msg) = 0;
  virtual Message receive(Clock::time_point deadline) = 0;
};

/// Sequential in-memory link: every message is encoded, decoded, and handed
/// straight to the node session, whose reply is queued for receive().
class InProcessLink : public NodeLink {
 public:
  /// With a capture buffer, every frame crossing the link (both directions,
  /// in order) is appended to it.
  explicit InProcessLink(NodeSession& session, std::vector<std::uint8_t>* capture = nullptr)
      : session_(session), capture_(capture) {}

  void send(const Message& msg) override;
  Message receive(Clock::time_point deadline) override;
  /// Queues the session's JOIN.
  void connect();

 private:
  void record(const Bytes& frame);

  NodeSession& session_;
  std::vector<std::uint8_t>* capture_;
  std::deque<Bytes> inbox_;
};

class TcpLink : public NodeLink {
 public:
  explicit TcpLink(Socket socket, std::size_t max_frame_bytes = kDefaultMaxFrameBytes)
      : socket_(std::move(socket)), max_frame_bytes_(max_frame_bytes) {}

  void send(const Message& msg) override { send_message(socket_, msg); }
  Message receive(Clock::time_point deadline) override {
    return receive_message(socket_, deadline, max_frame_bytes_);
  }
  Socket& socket() noexcept { return socket_; }

 private:
  Socket socket_;
  std::size_t max_frame_bytes_;
};

struct CoordinatorOptions {
  std::chrono::milliseconds node_timeout{300'000};
  std::size_t max_frame_bytes = kDefaultMaxFrameBytes;
};

/// One observed LOCAL_UPDATE frame: round, node, and encoded size in bytes.
struct UpdateObservation {
  std::uint64_t round_index = 0;
  std::string node_id;
  std::size_t frame_bytes = 0;
};

/// Round driver shared by the TCP server and the in-process simulation. It
/// produces the same parameters and history as run_federation given the same
/// config, data, and seeds.
class Coordinator {
 public:
  /// cfg.model.input_dim == 0 means "take the feature length the nodes report".
  Coordinator(FederationConfig cfg, std::vector<Example> test, CoordinatorOptions options = {});

  /// Reads one JOIN per link (in link order), then runs every round and ends
  /// with SHUTDOWN. Any failure is broadcast as ERROR before rethrowing.
  FederationResult run(std::vector<std::unique_ptr<NodeLink>> links);

  const std::vector<UpdateObservation>& update_log() const noexcept { return update_log_; }

 private:
  struct Joined {
    std::string node_id;
    std::uint64_t num_samples = 0;
    NodeLink* link = nullptr;
  };

  std::vector<Joined> handshake(std::vector<std::unique_ptr<NodeLink>>& links);
  Clock::time_point deadline() const { return Clock::now() + options_.node_timeout; }

  FederationConfig cfg_;
  std::vector<Example> test_;
  CoordinatorOptions options_;
  std::vector<UpdateObservation> update_log_;
};

/// Binds `listen`, accepts cfg.parties() connections, and runs the federation.
/// `on_listening` receives the bound port (useful with port 0).
FederationResult coordinator_serve(const Endpoint& listen, const FederationConfig& cfg,
                                   std::vector<Example> test, CoordinatorOptions options = {},
                                   const std::function<void(std::uint16_t)>& on_listening = {},
                                   std::vector<std::uint8_t>* wire_tap = nullptr);

struct NodeOptions {
  /// Connection attempts before giving up; the wait before attempt k + 1 is
  /// initial_backoff * 2^(k - 1).
  int connect_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  /// Longest silence tolerated from the coordinator.
  std::chrono::milliseconds idle_timeout{3'600'000};
  std::size_t max_frame_bytes = kDefaultMaxFrameBytes;
};

/// Runs a node session against a TCP coordinator. Returns the process exit
/// status: 0 after SHUTDOWN, the failing Error's exit code otherwise (3 for
/// protocol errors and timeouts), 5 when every connection attempt failed.
int node_run(const Endpoint& coordinator, NodeSession& session, const NodeOptions& options = {});

/// The whole federation through in-process links: same messages, no sockets.
FederationResult simulate_in_process(const FederationConfig& cfg, std::span<const NodeData> nodes,
                                     std::span<const Example> test,
                                     std::vector<std::uint8_t>* wire_capture = nullptr);

}  // namespace fedhorizon
