#include "fedhorizon/transport.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <thread>

namespace fedhorizon {

// ---------------------------------------------------------------------------
// Node session

NodeSession::NodeSession(std::string node_id, std::vector<Example> examples)
    : node_id_(std::move(node_id)), examples_(std::move(examples)) {
  if (examples_.empty()) throw DataError("node '" + node_id_ + "' has no training samples");
  feature_dim_ = examples_.front().features.size();
  for (const auto& ex : examples_) {
    if (ex.features.size() != feature_dim_) {
      throw DataError("node '" + node_id_ + "' mixes feature lengths");
    }
  }
}

Message NodeSession::join_message() const {
  Message msg;
  msg.node_id = node_id_;
  msg.body = JoinBody{examples_.size(), static_cast<std::uint32_t>(feature_dim_)};
  return msg;
}

std::optional<Message> NodeSession::handle(const Message& msg) {
  if (finished_) throw Error(ErrorCategory::protocol, "message received after SHUTDOWN");
  switch (msg.kind()) {
    case MessageKind::global_model: {
      const auto& body = std::get<GlobalModelBody>(msg.body);
      if (msg.node_id != node_id_) {
        throw Error(ErrorCategory::protocol,
                    "GLOBAL_MODEL addressed to '" + msg.node_id + "', this is '" + node_id_ + "'");
      }
      const auto& model = body.directive.model;
      if (model.input_dim != feature_dim_) {
        throw DataError("coordinator model expects " + std::to_string(model.input_dim) +
                        " features, node has " + std::to_string(feature_dim_));
      }
      check_parameters(model, body.params);
      spdlog::debug("node {}: training round {}", node_id_, msg.round_index);
      Message reply;
      reply.round_index = msg.round_index;
      reply.node_id = node_id_;
      reply.body = LocalUpdateBody{examples_.size(),
                                   train_local(model, body.params, examples_, body.directive.hyper)};
      ++rounds_trained_;
      return reply;
    }
    case MessageKind::round_result: {
      const auto& body = std::get<RoundResultBody>(msg.body);
      spdlog::debug("node {}: round {} aggregated {} updates, digest {:016x}", node_id_,
                    msg.round_index, body.updates_aggregated, body.global_digest);
      return std::nullopt;
    }
    case MessageKind::shutdown:
      finished_ = true;
      return std::nullopt;
    case MessageKind::error: {
      const auto& body = std::get<ErrorBody>(msg.body);
      throw Error(ErrorCategory::protocol,
                  "coordinator aborted (code " + std::to_string(body.code) + "): " + body.text);
    }
    default:
      break;
  }
  throw Error(ErrorCategory::protocol,
              "unexpected message kind " + std::to_string(static_cast<int>(msg.kind())) +
                  " at node");
}

// ---------------------------------------------------------------------------
// In-process link

void InProcessLink::record(const Bytes& frame) {
  if (capture_) capture_->insert(capture_->end(), frame.begin(), frame.end());
}

void InProcessLink::connect() {
  Bytes frame = encode_message(session_.join_message());
  record(frame);
  inbox_.push_back(std::move(frame));
}

void InProcessLink::send(const Message& msg) {
  const Bytes frame = encode_message(msg);
  record(frame);
  const auto reply = session_.handle(decode_message(frame));
  if (reply) {
    Bytes out = encode_message(*reply);
    record(out);
    inbox_.push_back(std::move(out));
  }
}

Message InProcessLink::receive(Clock::time_point) {
  if (inbox_.empty()) throw TransportError("node '" + session_.node_id() + "' has nothing to send");
  const Bytes frame = std::move(inbox_.front());
  inbox_.pop_front();
  return decode_message(frame);
}

// ---------------------------------------------------------------------------
// Coordinator

namespace {

Message make_error(RemoteErrorCode code, const std::string& text) {
  Message msg;
  msg.body = ErrorBody{static_cast<std::uint16_t>(code), text.substr(0, 60000)};
  return msg;
}

RemoteErrorCode remote_code(const std::exception& e) {
  if (const auto* pe = dynamic_cast<const ProtocolError*>(&e)) {
    return pe->code() == DecodeErrorCode::version_mismatch ? RemoteErrorCode::version_mismatch
                                                           : RemoteErrorCode::protocol;
  }
  if (dynamic_cast<const TransportError*>(&e)) return RemoteErrorCode::timeout;
  if (dynamic_cast<const DataError*>(&e)) return RemoteErrorCode::training_failed;
  return RemoteErrorCode::generic;
}

[[noreturn]] void protocol_violation(const std::string& what) {
  throw Error(ErrorCategory::protocol, what);
}

}  // namespace

Coordinator::Coordinator(FederationConfig cfg, std::vector<Example> test, CoordinatorOptions options)
    : cfg_(std::move(cfg)), test_(std::move(test)), options_(options) {}

std::vector<Coordinator::Joined> Coordinator::handshake(
    std::vector<std::unique_ptr<NodeLink>>& links) {
  if (links.size() != cfg_.node_ids.size()) {
    throw ConfigError("expected " + std::to_string(cfg_.node_ids.size()) + " nodes, have " +
                      std::to_string(links.size()) + " links");
  }
  std::vector<Joined> joined;
  std::optional<std::uint32_t> feature_dim;
  for (auto& link : links) {
    const Message msg = link->receive(deadline());
    if (msg.kind() != MessageKind::join) protocol_violation("expected JOIN as first message");
    const auto& body = std::get<JoinBody>(msg.body);
    if (!std::binary_search(cfg_.node_ids.begin(), cfg_.node_ids.end(), msg.node_id)) {
      link->send(make_error(RemoteErrorCode::protocol, "unknown node id " + msg.node_id));
      protocol_violation("JOIN from unknown node '" + msg.node_id + "'");
    }
    const bool duplicate = std::any_of(joined.begin(), joined.end(),
                                       [&](const Joined& j) { return j.node_id == msg.node_id; });
    if (duplicate) {
      link->send(make_error(RemoteErrorCode::duplicate_node, "duplicate JOIN for " + msg.node_id));
      protocol_violation("duplicate JOIN for node '" + msg.node_id + "'");
    }
    if (body.num_samples == 0) protocol_violation("node '" + msg.node_id + "' joined with no samples");
    if (feature_dim && *feature_dim != body.feature_dim) {
      protocol_violation("node '" + msg.node_id + "' reports feature length " +
                         std::to_string(body.feature_dim) + ", others " +
                         std::to_string(*feature_dim));
    }
    feature_dim = body.feature_dim;
    joined.push_back(Joined{msg.node_id, body.num_samples, link.get()});
    spdlog::info("node {} joined with {} samples", msg.node_id, body.num_samples);
  }
  if (cfg_.model.input_dim == 0) cfg_.model.input_dim = *feature_dim;
  if (cfg_.model.input_dim != *feature_dim) {
    throw ConfigError("model input_dim " + std::to_string(cfg_.model.input_dim) +
                      " does not match node feature length " + std::to_string(*feature_dim));
  }
  std::sort(joined.begin(), joined.end(),
            [](const Joined& a, const Joined& b) { return a.node_id < b.node_id; });
  return joined;
}

FederationResult Coordinator::run(std::vector<std::unique_ptr<NodeLink>> links) {
  try {
    const auto joined = handshake(links);
    cfg_.validate();
    std::uint64_t total = 0;
    for (const auto& j : joined) total += j.num_samples;

    FederationResult result;
    result.params = init_parameters(cfg_.model, cfg_.seed);
    result.history.initial_digest = result.params.digest();

    for (std::uint64_t round = 0; round < cfg_.num_rounds; ++round) {
      const auto start = Clock::now();
      for (const auto& j : joined) {
        Message msg;
        msg.round_index = static_cast<std::uint32_t>(round);
        msg.node_id = j.node_id;
        msg.body = GlobalModelBody{
            {cfg_.model, local_hyperparameters(cfg_, round, j.node_id, total, j.num_samples)},
            result.params};
        j.link->send(msg);
      }

      // Barrier: one LOCAL_UPDATE per node before aggregating.
      std::vector<RoundUpdate> updates;
      for (const auto& j : joined) {
        const Message msg = j.link->receive(deadline());
        if (msg.kind() == MessageKind::error) {
          const auto& e = std::get<ErrorBody>(msg.body);
          protocol_violation("node '" + j.node_id + "' failed: " + e.text);
        }
        if (msg.kind() != MessageKind::local_update) {
          protocol_violation("expected LOCAL_UPDATE from '" + j.node_id + "'");
        }
        if (msg.round_index != round || msg.node_id != j.node_id) {
          protocol_violation("LOCAL_UPDATE from '" + msg.node_id + "' for round " +
                             std::to_string(msg.round_index) + ", expected '" + j.node_id +
                             "' round " + std::to_string(round));
        }
        auto body = std::get<LocalUpdateBody>(msg.body);
        if (body.num_samples != j.num_samples) {
          protocol_violation("node '" + j.node_id + "' changed its sample count");
        }
        check_parameters(cfg_.model, body.params);
        update_log_.push_back({round, j.node_id, encode_message(msg).size()});
        updates.push_back(RoundUpdate{j.node_id, std::move(body.params), body.num_samples, round});
      }
      result.params = aggregate(updates);

      RoundRecord record;
      record.round_index = round;
      record.global_digest = result.params.digest();
      for (const auto& u : updates) {
        record.nodes.push_back(NodeRecord{u.node_id, u.num_samples, u.params.digest()});
      }
      if (!test_.empty()) {
        const auto report = evaluate(cfg_.model, result.params, test_);
        record.test_macro_f1 = report.macro_f1;
        record.test_accuracy = report.accuracy;
      }
      record.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
      spdlog::info("round {} aggregated {} updates, digest {:016x}", round, updates.size(),
                   record.global_digest);

      for (const auto& j : joined) {
        Message msg;
        msg.round_index = static_cast<std::uint32_t>(round);
        msg.node_id = j.node_id;
        msg.body = RoundResultBody{record.global_digest, static_cast<std::uint32_t>(updates.size())};
        j.link->send(msg);
      }
      result.history.rounds.push_back(std::move(record));
    }

    for (const auto& j : joined) {
      Message msg;
      msg.round_index = static_cast<std::uint32_t>(cfg_.num_rounds);
      msg.node_id = j.node_id;
      msg.body = ShutdownBody{};
      j.link->send(msg);
    }
    return result;
  } catch (const std::exception& e) {
    spdlog::error("federation aborted: {}", e.what());
    const Message abort = make_error(remote_code(e), e.what());
    for (auto& link : links) {
      try {
        link->send(abort);
      } catch (...) {
        // peer already gone
      }
    }
    throw;
  }
}

FederationResult coordinator_serve(const Endpoint& listen, const FederationConfig& cfg,
                                   std::vector<Example> test, CoordinatorOptions options,
                                   const std::function<void(std::uint16_t)>& on_listening,
                                   std::vector<std::uint8_t>* wire_tap) {
  Listener listener(listen);
  spdlog::info("coordinator listening on {}:{}", listen.host, listener.port());
  if (on_listening) on_listening(listener.port());

  std::vector<std::unique_ptr<NodeLink>> links;
  const auto accept_deadline = Clock::now() + options.node_timeout;
  while (links.size() < cfg.parties()) {
    auto socket = listener.accept(accept_deadline);
    if (!socket) {
      throw TransportError("timed out waiting for nodes: " + std::to_string(links.size()) + " of " +
                           std::to_string(cfg.parties()) + " connected");
    }
    socket->set_tap(wire_tap);
    links.push_back(std::make_unique<TcpLink>(std::move(*socket), options.max_frame_bytes));
  }
  Coordinator coordinator(cfg, std::move(test), options);
  return coordinator.run(std::move(links));
}

// ---------------------------------------------------------------------------
// Node over TCP

int node_run(const Endpoint& coordinator, NodeSession& session, const NodeOptions& options) {
  Socket socket;
  auto backoff = options.initial_backoff;
  for (int attempt = 1; attempt <= options.connect_attempts; ++attempt) {
    try {
      socket = connect_once(coordinator);
      break;
    } catch (const Error& e) {
      spdlog::warn("node {}: connection attempt {}/{} failed: {}", session.node_id(), attempt,
                   options.connect_attempts, e.what());
      if (attempt == options.connect_attempts) {
        spdlog::error("node {}: giving up on {}", session.node_id(), coordinator.to_string());
        return static_cast<int>(ErrorCategory::connect);
      }
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }

  try {
    send_message(socket, session.join_message());
    while (!session.finished()) {
      const Message msg =
          receive_message(socket, Clock::now() + options.idle_timeout, options.max_frame_bytes);
      if (auto reply = session.handle(msg)) send_message(socket, *reply);
    }
    spdlog::info("node {}: shutdown after {} rounds", session.node_id(), session.rounds_trained());
    return 0;
  } catch (const Error& e) {
    spdlog::error("node {}: {}", session.node_id(), e.what());
    if (dynamic_cast<const TransportError*>(&e) == nullptr) {
      try {
        Message err = make_error(remote_code(e), e.what());
        err.node_id = session.node_id();
        send_message(socket, err);
      } catch (...) {
        // connection unusable
      }
    }
    return e.exit_code();
  }
}

FederationResult simulate_in_process(const FederationConfig& cfg, std::span<const NodeData> nodes,
                                     std::span<const Example> test,
                                     std::vector<std::uint8_t>* wire_capture) {
  std::vector<std::unique_ptr<NodeSession>> sessions;
  std::vector<std::unique_ptr<NodeLink>> links;
  for (const auto& n : nodes) {
    sessions.push_back(std::make_unique<NodeSession>(n.node_id, n.examples));
    auto link = std::make_unique<InProcessLink>(*sessions.back(), wire_capture);
    link->connect();
    links.push_back(std::move(link));
  }
  Coordinator coordinator(cfg, std::vector<Example>(test.begin(), test.end()));
  return coordinator.run(std::move(links));
}

}  // namespace fedhorizon
