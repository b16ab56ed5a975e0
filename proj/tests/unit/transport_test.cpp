#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <future>
#include <thread>

#include "fedhorizon/transport.hpp"
#include "support.hpp"

namespace fh = fedhorizon;
using namespace std::chrono_literals;
using fh::testing::random_examples;

namespace {

fh::FederationConfig config(std::vector<std::string> ids, std::size_t d) {
  fh::FederationConfig cfg;
  cfg.num_rounds = 4;
  cfg.alpha = 0.01;
  cfg.hyper.learning_rate = 0.1;
  cfg.hyper.batch_size = 8;
  cfg.hyper.seed = 21;
  cfg.model.input_dim = d;
  cfg.model.hidden_dim = 5;
  cfg.model.dropout_rate = 0.25;
  cfg.node_ids = std::move(ids);
  cfg.seed = 21;
  return cfg;
}

std::vector<fh::NodeData> two_nodes(std::size_t d) {
  fh::Rng rng(99);
  return {{"nih", random_examples(rng, 37, d, 4)}, {"ucl", random_examples(rng, 11, d, 4)}};
}

fh::Endpoint local(std::uint16_t port) { return fh::Endpoint{"127.0.0.1", port}; }

fh::NodeOptions fast_node() {
  fh::NodeOptions o;
  o.connect_attempts = 20;
  o.initial_backoff = 10ms;
  o.idle_timeout = 30s;
  return o;
}

struct Served {
  fh::FederationResult result;
  std::vector<int> node_status;
};

// Runs the TCP coordinator on an ephemeral port with one thread per node.
Served serve(const fh::FederationConfig& cfg, const std::vector<fh::NodeData>& nodes,
             const std::vector<fh::Example>& test, std::vector<std::uint8_t>* tap = nullptr) {
  std::promise<std::uint16_t> port;
  auto port_ready = port.get_future();
  auto coordinator = std::async(std::launch::async, [&] {
    fh::CoordinatorOptions opt;
    opt.node_timeout = 30s;
    return fh::coordinator_serve(local(0), cfg, test, opt,
                                 [&](std::uint16_t p) { port.set_value(p); }, tap);
  });
  const auto p = port_ready.get();
  Served out;
  out.node_status.resize(nodes.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    threads.emplace_back([&, i] {
      fh::NodeSession session(nodes[i].node_id, nodes[i].examples);
      out.node_status[i] = fh::node_run(local(p), session, fast_node());
    });
  }
  for (auto& t : threads) t.join();
  out.result = coordinator.get();
  return out;
}

std::uint16_t unused_port() {
  fh::Listener l(local(0));
  return l.port();
}

fh::Bytes raw_join(const std::string& id, std::uint64_t n, std::uint32_t dim) {
  fh::Message m;
  m.node_id = id;
  m.body = fh::JoinBody{n, dim};
  return fh::encode_message(m);
}

bool contains(const std::vector<std::uint8_t>& hay, const std::vector<std::uint8_t>& needle) {
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

TEST(InProcess, SimulatorMatchesInMemoryFederation) {
  const auto nodes = two_nodes(3);
  fh::Rng rng(1);
  const auto test = random_examples(rng, 10, 3, 4);
  const auto cfg = config({"nih", "ucl"}, 3);
  const auto sim = fh::simulate_in_process(cfg, nodes, test);
  const auto mem = fh::run_federation(cfg, nodes, test);
  EXPECT_EQ(sim.params, mem.params);
  EXPECT_EQ(sim.history.digest(), mem.history.digest());
}

TEST(InProcess, InputDimZeroAdoptsNodeFeatureLength) {
  const auto nodes = two_nodes(3);
  auto cfg = config({"nih", "ucl"}, 3);
  const auto want = fh::run_federation(cfg, nodes, {});
  cfg.model.input_dim = 0;
  EXPECT_EQ(fh::simulate_in_process(cfg, nodes, {}).params, want.params);
}

TEST(InProcess, WireCarriesNoFeatureValues) {
  auto nodes = two_nodes(3);
  const double sentinel = 4242.424242;
  for (auto& n : nodes) {
    for (auto& ex : n.examples) ex.features[1] = sentinel;
  }
  std::vector<std::uint8_t> wire;
  fh::simulate_in_process(config({"nih", "ucl"}, 3), nodes, {}, &wire);
  ASSERT_FALSE(wire.empty());
  std::vector<std::uint8_t> pattern(8);
  std::memcpy(pattern.data(), &sentinel, 8);
  EXPECT_FALSE(contains(wire, pattern));
  // Sanity check for the search itself: parameters do appear.
  const auto init = fh::init_parameters(config({"nih", "ucl"}, 3).model, 21);
  const double first = init[0];
  std::memcpy(pattern.data(), &first, 8);
  EXPECT_TRUE(contains(wire, pattern));
}

TEST(InProcess, LocalUpdateSizeIndependentOfNodeSize) {
  fh::Rng rng(2);
  const std::vector<fh::NodeData> nodes{{"aaa", random_examples(rng, 3, 4, 4)},
                                         {"bbb", random_examples(rng, 300, 4, 4)}};
  const auto cfg = config({"aaa", "bbb"}, 4);
  std::vector<std::unique_ptr<fh::NodeSession>> sessions;
  std::vector<std::unique_ptr<fh::NodeLink>> links;
  for (const auto& n : nodes) {
    sessions.push_back(std::make_unique<fh::NodeSession>(n.node_id, n.examples));
    auto link = std::make_unique<fh::InProcessLink>(*sessions.back());
    link->connect();
    links.push_back(std::move(link));
  }
  fh::Coordinator coordinator(cfg, {});
  coordinator.run(std::move(links));
  const auto& log = coordinator.update_log();
  ASSERT_EQ(log.size(), cfg.num_rounds * 2);
  const std::size_t expected = 4 + 8 + 3 + 8 + 4 + 8 * cfg.model.parameter_count();
  for (const auto& obs : log) EXPECT_EQ(obs.frame_bytes, expected);
}

TEST(InProcess, NodeSessionRejectsWrongModelWidth) {
  fh::Rng rng(3);
  fh::NodeSession session("a", random_examples(rng, 4, 2, 4));
  fh::Message m;
  m.node_id = "a";
  fh::GlobalModelBody body;
  body.directive.model = {3, 2, 4, 0.0};
  body.params = fh::ParameterVector(body.directive.model.parameter_count());
  m.body = body;
  EXPECT_THROW(session.handle(m), fh::DataError);
  EXPECT_THROW(fh::NodeSession("empty", {}), fh::DataError);
}

TEST(Tcp, SingleNodeMatchesSingleNodeBaselineBitwise) {
  fh::Rng rng(4);
  const fh::NodeData node{"solo", random_examples(rng, 29, 3, 4)};
  const auto test = random_examples(rng, 9, 3, 4);
  const auto cfg = config({"solo"}, 3);
  const auto served = serve(cfg, {node}, test);
  EXPECT_EQ(served.node_status, std::vector<int>{0});
  const auto baseline = fh::run_single_node(cfg, node, test);
  EXPECT_EQ(served.result.params, baseline.params);
  EXPECT_EQ(served.result.history.digest(), baseline.history.digest());
}

TEST(Tcp, TwoNodesMatchSimulatorAndLeakNoFeatures) {
  auto nodes = two_nodes(3);
  const double sentinel = -777.125;
  for (auto& ex : nodes[0].examples) ex.features[0] = sentinel;
  fh::Rng rng(5);
  const auto test = random_examples(rng, 10, 3, 4);
  const auto cfg = config({"nih", "ucl"}, 3);
  std::vector<std::uint8_t> tap;
  const auto served = serve(cfg, nodes, test, &tap);
  EXPECT_EQ(served.node_status, (std::vector<int>{0, 0}));
  const auto sim = fh::simulate_in_process(cfg, nodes, test);
  EXPECT_EQ(served.result.history.digest(), sim.history.digest());
  EXPECT_EQ(served.result.params, sim.params);
  for (const auto& r : served.result.history.rounds) EXPECT_EQ(r.nodes.size(), 2u);
  std::vector<std::uint8_t> pattern(8);
  std::memcpy(pattern.data(), &sentinel, 8);
  ASSERT_FALSE(tap.empty());
  EXPECT_FALSE(contains(tap, pattern));
}

TEST(Tcp, MissingNodeTimesOut) {
  fh::CoordinatorOptions opt;
  opt.node_timeout = 200ms;
  try {
    fh::coordinator_serve(local(0), config({"a", "b"}, 2), {}, opt);
    FAIL() << "expected a timeout";
  } catch (const fh::Error& e) {
    EXPECT_EQ(e.exit_code(), 3);
  }
}

TEST(Tcp, SilentNodeTimesOutDuringHandshake) {
  std::promise<std::uint16_t> port;
  auto ready = port.get_future();
  auto coordinator = std::async(std::launch::async, [&] {
    fh::CoordinatorOptions opt;
    opt.node_timeout = 300ms;
    fh::coordinator_serve(local(0), config({"a"}, 2), {}, opt,
                          [&](std::uint16_t p) { port.set_value(p); });
  });
  auto silent = fh::connect_once(local(ready.get()));
  try {
    coordinator.get();
    FAIL() << "expected a timeout";
  } catch (const fh::Error& e) {
    EXPECT_EQ(e.exit_code(), 3);
  }
}

TEST(Tcp, DuplicateJoinIsRefused) {
  std::promise<std::uint16_t> port;
  auto ready = port.get_future();
  auto coordinator = std::async(std::launch::async, [&] {
    fh::CoordinatorOptions opt;
    opt.node_timeout = 5s;
    fh::coordinator_serve(local(0), config({"a", "b"}, 2), {}, opt,
                          [&](std::uint16_t p) { port.set_value(p); });
  });
  const auto p = ready.get();
  auto first = fh::connect_once(local(p));
  auto second = fh::connect_once(local(p));
  first.send_all(raw_join("a", 5, 2));
  second.send_all(raw_join("a", 5, 2));
  EXPECT_THROW(coordinator.get(), fh::Error);
  bool saw_duplicate = false;
  for (auto* s : {&first, &second}) {
    try {
      const auto msg = fh::receive_message(*s, fh::Clock::now() + 2s);
      if (msg.kind() == fh::MessageKind::error &&
          std::get<fh::ErrorBody>(msg.body).code ==
              static_cast<std::uint16_t>(fh::RemoteErrorCode::duplicate_node)) {
        saw_duplicate = true;
      }
    } catch (const fh::Error&) {
    }
  }
  EXPECT_TRUE(saw_duplicate);
}

TEST(Tcp, VersionMismatchGetsErrorReply) {
  std::promise<std::uint16_t> port;
  auto ready = port.get_future();
  auto coordinator = std::async(std::launch::async, [&] {
    fh::CoordinatorOptions opt;
    opt.node_timeout = 5s;
    fh::coordinator_serve(local(0), config({"a"}, 2), {}, opt,
                          [&](std::uint16_t p) { port.set_value(p); });
  });
  auto s = fh::connect_once(local(ready.get()));
  auto frame = raw_join("a", 5, 2);
  frame[4] = 2;
  s.send_all(frame);
  try {
    coordinator.get();
    FAIL() << "coordinator accepted a version 2 JOIN";
  } catch (const fh::Error& e) {
    EXPECT_EQ(e.exit_code(), 3);
  }
  const auto reply = fh::receive_message(s, fh::Clock::now() + 2s);
  ASSERT_EQ(reply.kind(), fh::MessageKind::error);
  EXPECT_EQ(std::get<fh::ErrorBody>(reply.body).code,
            static_cast<std::uint16_t>(fh::RemoteErrorCode::version_mismatch));
}

TEST(Tcp, NodeGivesUpOnDeadEndpoint) {
  fh::Rng rng(6);
  fh::NodeSession session("a", random_examples(rng, 3, 2, 4));
  fh::NodeOptions opt;
  opt.connect_attempts = 3;
  opt.initial_backoff = 5ms;
  const auto start = fh::Clock::now();
  EXPECT_EQ(fh::node_run(local(unused_port()), session, opt), 5);
  EXPECT_GE(fh::Clock::now() - start, 15ms);  // 5 + 10 ms of backoff
}

TEST(Tcp, ImmediateShutdownEndsNodeCleanly) {
  fh::Listener listener(local(0));
  auto server = std::async(std::launch::async, [&] {
    auto s = listener.accept(fh::Clock::now() + 5s);
    EXPECT_TRUE(s.has_value());
    const auto join = fh::receive_message(*s, fh::Clock::now() + 5s);
    EXPECT_EQ(join.kind(), fh::MessageKind::join);
    fh::send_message(*s, fh::Message{});
  });
  fh::Rng rng(7);
  fh::NodeSession session("a", random_examples(rng, 3, 2, 4));
  EXPECT_EQ(fh::node_run(local(listener.port()), session, fast_node()), 0);
  EXPECT_EQ(session.rounds_trained(), 0u);
  server.get();
}

TEST(Tcp, NodeExitsWithProtocolCodeOnCoordinatorError) {
  fh::Listener listener(local(0));
  auto server = std::async(std::launch::async, [&] {
    auto s = listener.accept(fh::Clock::now() + 5s);
    fh::receive_message(*s, fh::Clock::now() + 5s);
    fh::Message err;
    err.body = fh::ErrorBody{1, "abort"};
    fh::send_message(*s, err);
  });
  fh::Rng rng(8);
  fh::NodeSession session("a", random_examples(rng, 3, 2, 4));
  EXPECT_EQ(fh::node_run(local(listener.port()), session, fast_node()), 3);
  server.get();
}

TEST(Tcp, BindFailureIsExitCodeFour) {
  fh::Listener taken(local(0));
  try {
    fh::Listener again(local(taken.port()));
    FAIL() << "second bind succeeded";
  } catch (const fh::Error& e) {
    EXPECT_EQ(e.exit_code(), 4);
  }
}

TEST(Endpoint, Parse) {
  const auto e = fh::Endpoint::parse("127.0.0.1:9000");
  EXPECT_EQ(e.host, "127.0.0.1");
  EXPECT_EQ(e.port, 9000);
  EXPECT_EQ(e.to_string(), "127.0.0.1:9000");
  EXPECT_THROW(fh::Endpoint::parse("nohost"), fh::ConfigError);
  EXPECT_THROW(fh::Endpoint::parse("h:99999"), fh::ConfigError);
  EXPECT_THROW(fh::Endpoint::parse("h:"), fh::ConfigError);
}
