#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fedhorizon/error.hpp"
#include "fedhorizon/federation.hpp"
#include "support.hpp"

namespace fh = fedhorizon;
using fh::testing::random_examples;
using fh::testing::random_params;

namespace {

fh::FederationConfig small_config(std::vector<std::string> ids, std::size_t d, double dropout = 0.0) {
  fh::FederationConfig cfg;
  cfg.num_rounds = 3;
  cfg.alpha = 0.01;
  cfg.hyper.learning_rate = 0.1;
  cfg.hyper.batch_size = 8;
  cfg.hyper.seed = 5;
  cfg.model.input_dim = d;
  cfg.model.hidden_dim = 6;
  cfg.model.dropout_rate = dropout;
  cfg.node_ids = std::move(ids);
  cfg.seed = 5;
  return cfg;
}

fh::ParameterVector vec(std::initializer_list<double> v) { return fh::ParameterVector(std::vector<double>(v)); }

}  // namespace

TEST(ComputeWeights, Table4Totals) {
  const std::vector<std::uint64_t> sizes{300, 31};
  const auto w = fh::compute_weights(sizes);
  EXPECT_DOUBLE_EQ(w[0], 300.0 / 331.0);
  EXPECT_DOUBLE_EQ(w[1], 31.0 / 331.0);
  EXPECT_NEAR(w[0], 0.90634, 1e-5);
  EXPECT_NEAR(w[1], 0.09366, 1e-5);
}

TEST(ComputeWeights, TrivialCases) {
  EXPECT_EQ(fh::compute_weights(std::vector<std::uint64_t>{17}), std::vector<double>{1.0});
  EXPECT_EQ(fh::compute_weights(std::vector<std::uint64_t>{50, 50}), (std::vector<double>{0.5, 0.5}));
  EXPECT_THROW(fh::compute_weights(std::vector<std::uint64_t>{}), fh::DataError);
  EXPECT_THROW(fh::compute_weights(std::vector<std::uint64_t>{3, 0}), fh::DataError);
}

TEST(ComputeWeights, SumToOneProperty) {
  fh::Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::uint64_t> sizes(1 + rng.below(10));
    for (auto& n : sizes) n = 1 + rng.below(100000);
    const auto w = fh::compute_weights(sizes);
    double sum = 0.0;
    for (double v : w) {
      ASSERT_GT(v, 0.0);
      ASSERT_LE(v, 1.0);
      sum += v;
    }
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(LocalRegWeight, Examples) {
  EXPECT_DOUBLE_EQ(fh::local_reg_weight(0.1, 400, 100, 4), 0.1);
  EXPECT_EQ(fh::local_reg_weight(0.0, 331, 31, 2), 0.0);
  EXPECT_NEAR(fh::local_reg_weight(0.01, 331, 300, 2), 0.0055167, 1e-7);
  EXPECT_THROW(fh::local_reg_weight(0.1, 10, 0, 2), fh::DataError);
  EXPECT_THROW(fh::local_reg_weight(0.1, 10, 5, 0), fh::DataError);
}

TEST(LocalRegWeight, WeightedSumRecoversAlpha) {
  fh::Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t parties = 1 + rng.below(8);
    std::vector<std::uint64_t> sizes(parties);
    std::uint64_t total = 0;
    for (auto& n : sizes) total += (n = 1 + rng.below(5000));
    const double alpha = rng.uniform(0.0, 10.0);
    const auto w = fh::compute_weights(sizes);
    double sum = 0.0;
    for (std::size_t k = 0; k < parties; ++k) sum += w[k] * fh::local_reg_weight(alpha, total, sizes[k], parties);
    ASSERT_NEAR(sum, alpha, 1e-12 * std::max(1.0, alpha));
  }
}

TEST(Aggregate, SingleUpdatePassesThroughExactly) {
  fh::Rng rng(3);
  const auto p = random_params(rng, 50);
  const std::vector<fh::RoundUpdate> u{{"a", p, 7, 0}};
  EXPECT_EQ(fh::aggregate(u), p);
}

TEST(Aggregate, WeightedMeanExample) {
  const std::vector<fh::RoundUpdate> u{{"a", vec({1, 1}), 100, 0}, {"b", vec({3, 3}), 300, 0}};
  const auto out = fh::aggregate(u);
  EXPECT_DOUBLE_EQ(out[0], 2.5);
  EXPECT_DOUBLE_EQ(out[1], 2.5);
}

TEST(Aggregate, MatchesBruteForceAndIgnoresInputOrder) {
  fh::Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const std::size_t parties = 2 + rng.below(4), dim = 1 + rng.below(500);
    std::vector<fh::RoundUpdate> updates;
    std::uint64_t total = 0;
    for (std::size_t k = 0; k < parties; ++k) {
      const auto n = 1 + rng.below(1000);
      total += n;
      updates.push_back({"node" + std::to_string(k), random_params(rng, dim), n, 4});
    }
    const auto out = fh::aggregate(updates);
    for (std::size_t i = 0; i < dim; ++i) {
      double want = 0.0;
      for (const auto& u : updates) want += static_cast<double>(u.num_samples) / static_cast<double>(total) * u.params[i];
      ASSERT_NEAR(out[i], want, 1e-12);
    }
    auto shuffled = updates;
    rng.shuffle(std::span(shuffled));
    ASSERT_EQ(fh::aggregate(shuffled), out);
  }
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(fh::aggregate({}), fh::DataError);
  const std::vector<fh::RoundUpdate> dup{{"a", vec({1}), 1, 0}, {"a", vec({1}), 1, 0}};
  EXPECT_THROW(fh::aggregate(dup), fh::DataError);
  const std::vector<fh::RoundUpdate> len{{"a", vec({1}), 1, 0}, {"b", vec({1, 2}), 1, 0}};
  EXPECT_THROW(fh::aggregate(len), fh::DataError);
  const std::vector<fh::RoundUpdate> rounds{{"a", vec({1}), 1, 0}, {"b", vec({1}), 1, 1}};
  EXPECT_THROW(fh::aggregate(rounds), fh::DataError);
}

TEST(RunRound, IdenticalNodesAverageToOneNode) {
  fh::Rng rng(5);
  const auto data = random_examples(rng, 40, 3, 4);
  auto cfg = small_config({"a", "b", "c"}, 3);
  cfg.hyper.local_epochs = 2;
  const auto start = fh::init_parameters(cfg.model, 1);
  // Full batches make the local result independent of the per-node shuffle seed.
  cfg.hyper.batch_size = 40;
  const std::vector<fh::NodeData> nodes{{"a", data}, {"b", data}, {"c", data}};
  const auto out = fh::run_round(start, nodes, cfg, 0);
  ASSERT_EQ(out.updates.size(), 3u);
  for (std::size_t i = 0; i < out.global.size(); ++i) {
    ASSERT_NEAR(out.global[i], out.updates[0].params[i], 1e-15);
  }
}

TEST(RunRound, OneStepEqualsCentralizedGradientStep) {
  fh::Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng.below(20);
    auto cfg = small_config({"nih", "ucl"}, d);
    cfg.alpha = rng.uniform(0.0, 0.1);
    cfg.hyper.local_epochs = 1;
    cfg.hyper.batch_size = 1000;
    const auto a = random_examples(rng, 1 + rng.below(150), d, 4);
    const auto b = random_examples(rng, 1 + rng.below(50), d, 4);
    const auto start = random_params(rng, cfg.model.parameter_count(), 0.3);
    const std::vector<fh::NodeData> nodes{{"nih", a}, {"ucl", b}};
    const auto fed = fh::run_round(start, nodes, cfg, 0).global;

    auto pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto g = fh::gradient(cfg.model, start, pooled, cfg.alpha);
    for (std::size_t i = 0; i < fed.size(); ++i) {
      ASSERT_NEAR(fed[i], start[i] - cfg.hyper.learning_rate * g[i], 1e-9) << "trial " << t;
    }
  }
}

TEST(RunRound, EmptyNodeRejected) {
  fh::Rng rng(7);
  const auto cfg = small_config({"a", "b"}, 2);
  const std::vector<fh::NodeData> nodes{{"a", random_examples(rng, 5, 2, 4)}, {"b", {}}};
  EXPECT_THROW(fh::run_round(fh::init_parameters(cfg.model, 0), nodes, cfg, 0), fh::DataError);
}

TEST(RunRound, NodesMustMatchConfig) {
  fh::Rng rng(8);
  const auto cfg = small_config({"a", "b"}, 2);
  const std::vector<fh::NodeData> nodes{{"a", random_examples(rng, 5, 2, 4)}, {"z", random_examples(rng, 5, 2, 4)}};
  EXPECT_THROW(fh::run_round(fh::init_parameters(cfg.model, 0), nodes, cfg, 0), fh::ConfigError);
}

TEST(FederationConfig, Validation) {
  auto cfg = small_config({"b", "a"}, 2);
  EXPECT_THROW(cfg.validate(), fh::ConfigError);
  cfg.node_ids = {"a", "a"};
  EXPECT_THROW(cfg.validate(), fh::ConfigError);
  cfg.node_ids = {};
  EXPECT_THROW(cfg.validate(), fh::ConfigError);
  cfg.node_ids = {"a"};
  cfg.alpha = -1;
  EXPECT_THROW(cfg.validate(), fh::ConfigError);
}

TEST(RunFederation, ZeroRoundsReturnsInitialParameters) {
  fh::Rng rng(9);
  auto cfg = small_config({"a"}, 3);
  cfg.num_rounds = 0;
  const std::vector<fh::NodeData> nodes{{"a", random_examples(rng, 10, 3, 4)}};
  const auto r = fh::run_federation(cfg, nodes, {});
  EXPECT_EQ(r.params, fh::init_parameters(cfg.model, cfg.seed));
  EXPECT_TRUE(r.history.rounds.empty());
}

TEST(RunFederation, BitwiseDeterministicWithDropoutAndThreads) {
  fh::Rng rng(10);
  const auto cfg = small_config({"a", "b", "c"}, 4, 0.3);
  const std::vector<fh::NodeData> nodes{{"c", random_examples(rng, 30, 4, 4)},
                                         {"a", random_examples(rng, 20, 4, 4)},
                                         {"b", random_examples(rng, 9, 4, 4)}};
  const auto test = random_examples(rng, 12, 4, 4);
  const auto r1 = fh::run_federation(cfg, nodes, test);
  const auto r2 = fh::run_federation(cfg, nodes, test);
  EXPECT_EQ(r1.params, r2.params);
  EXPECT_EQ(r1.history.digest(), r2.history.digest());
  ASSERT_EQ(r1.history.rounds.size(), cfg.num_rounds);
  for (const auto& round : r1.history.rounds) {
    ASSERT_EQ(round.nodes.size(), 3u);  // every round aggregated all P updates
    ASSERT_TRUE(round.test_macro_f1.has_value());
    EXPECT_EQ(round.nodes[0].node_id, "a");
  }
}

TEST(RunFederation, HistoryDigestIgnoresWallTime) {
  fh::Rng rng(11);
  const auto cfg = small_config({"a"}, 2);
  const std::vector<fh::NodeData> nodes{{"a", random_examples(rng, 10, 2, 4)}};
  auto r = fh::run_federation(cfg, nodes, {});
  const auto before = r.history.digest();
  r.history.rounds[0].wall_seconds += 100.0;
  EXPECT_EQ(r.history.digest(), before);
  r.history.rounds[0].global_digest ^= 1;
  EXPECT_NE(r.history.digest(), before);
  const auto doc = fh::to_json(r.history);
  EXPECT_EQ(doc["rounds"].size(), cfg.num_rounds);
}

TEST(RunSingleNode, EqualsOneNodeFederationBitwise) {
  fh::Rng rng(12);
  const auto cfg = small_config({"solo"}, 3, 0.2);
  const fh::NodeData node{"solo", random_examples(rng, 25, 3, 4)};
  const auto test = random_examples(rng, 8, 3, 4);
  const auto fed = fh::run_federation(cfg, std::span(&node, 1), test);
  auto other = cfg;
  other.node_ids = {"x", "y"};  // ignored: single-node runs use the node alone
  const auto single = fh::run_single_node(other, node, test);
  EXPECT_EQ(single.params, fed.params);
  EXPECT_EQ(single.history.digest(), fed.history.digest());
  EXPECT_THROW(fh::run_single_node(cfg, fh::NodeData{"solo", {}}, test), fh::DataError);
}

TEST(RunCentralized, OneSiteMatchesSingleNodeAndOrderInvariant) {
  const auto sites = fh::synthesize_dataset({{"nih", {10, 10, 10, 10}}, {"ucl", {3, 4, 5, 6}}}, 4, 2.0, 3);
  auto cfg = small_config({"nih"}, 4);
  const auto one = fh::run_centralized(cfg, {sites[0]}, {});
  const auto single = fh::run_single_node(cfg, fh::node_data(sites[0]), {});
  EXPECT_EQ(one.params, single.params);
  const auto ab = fh::run_centralized(cfg, {sites[0], sites[1]}, {});
  const auto ba = fh::run_centralized(cfg, {sites[1], sites[0]}, {});
  EXPECT_EQ(ab.params, ba.params);
  EXPECT_THROW(fh::run_centralized(cfg, {fh::SiteDataset{"empty", {}}}, {}), fh::DataError);
}

TEST(Evaluate, ReportsOneBasedLabels) {
  fh::ModelSpec spec;
  spec.input_dim = 1;
  spec.hidden_dim = 1;
  fh::ParameterVector p(spec.parameter_count());
  fh::layers(spec, p).b2[2] = 5.0;  // always predicts class index 2 (label 3)
  const std::vector<fh::Example> test{{{0.0}, 2}, {{1.0}, 0}};
  const auto r = fh::evaluate(spec, p, test);
  EXPECT_EQ(r.confusion.count(3, 3), 1u);
  EXPECT_EQ(r.confusion.count(1, 3), 1u);
  EXPECT_EQ(r.accuracy, 0.5);
}
