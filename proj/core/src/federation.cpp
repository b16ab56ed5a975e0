#include "fedhorizon/federation.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <future>
#include <set>

#include "fedhorizon/error.hpp"
#include "fedhorizon/random.hpp"

namespace fedhorizon {

void FederationConfig::validate() const {
  model.validate();
  hyper.validate();
  if (node_ids.empty()) throw ConfigError("federation needs at least one node");
  for (std::size_t i = 1; i < node_ids.size(); ++i) {
    if (!(node_ids[i - 1] < node_ids[i])) {
      throw ConfigError("node ids must be unique and sorted; offending id '" + node_ids[i] + "'");
    }
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be nonnegative");
}

std::vector<double> compute_weights(std::span<const std::uint64_t> node_sizes) {
  if (node_sizes.empty()) throw DataError("cannot weight an empty node list");
  std::uint64_t total = 0;
  for (const auto n : node_sizes) {
    if (n == 0) throw DataError("node sample counts must be positive");
    total += n;
  }
  std::vector<double> weights;
  weights.reserve(node_sizes.size());
  for (const auto n : node_sizes) {
    weights.push_back(static_cast<double>(n) / static_cast<double>(total));
  }
  return weights;
}

double local_reg_weight(double alpha, std::uint64_t total_samples, std::uint64_t node_samples,
                        std::size_t parties) {
  if (node_samples == 0 || parties == 0) {
    throw DataError("local regularization needs positive N_k and P");
  }
  return alpha * static_cast<double>(total_samples) /
         (static_cast<double>(node_samples) * static_cast<double>(parties));
}

ParameterVector aggregate(std::span<const RoundUpdate> updates) {
  if (updates.empty()) throw DataError("no updates to aggregate");
  std::vector<const RoundUpdate*> order;
  order.reserve(updates.size());
  for (const auto& u : updates) order.push_back(&u);
  std::sort(order.begin(), order.end(),
            [](const RoundUpdate* a, const RoundUpdate* b) { return a->node_id < b->node_id; });

  const std::size_t dim = order.front()->params.size();
  const std::uint64_t round = order.front()->round_index;
  std::vector<std::uint64_t> sizes;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& u = *order[i];
    if (i > 0 && u.node_id == order[i - 1]->node_id) {
      throw DataError("duplicate update from node '" + u.node_id + "'");
    }
    if (u.params.size() != dim) {
      throw DataError("update from '" + u.node_id + "' has " + std::to_string(u.params.size()) +
                      " parameters, expected " + std::to_string(dim));
    }
    if (u.round_index != round) {
      throw DataError("updates span rounds " + std::to_string(round) + " and " +
                      std::to_string(u.round_index));
    }
    sizes.push_back(u.num_samples);
  }
  const auto weights = compute_weights(sizes);

  ParameterVector out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = weights[0] * order[0]->params[i];
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto& p = order[k]->params;
    for (std::size_t i = 0; i < dim; ++i) out[i] += weights[k] * p[i];
  }
  return out;
}

std::uint64_t node_training_seed(const Hyperparameters& hyper, std::uint64_t round_index,
                                 const std::string& node_id) {
  return derive_seed(hyper.seed, round_index, node_id);
}

Hyperparameters local_hyperparameters(const FederationConfig& cfg, std::uint64_t round_index,
                                      const std::string& node_id, std::uint64_t total_samples,
                                      std::uint64_t node_samples) {
  Hyperparameters h = cfg.hyper;
  h.reg_weight = local_reg_weight(cfg.alpha, total_samples, node_samples, cfg.parties());
  h.seed = node_training_seed(cfg.hyper, round_index, node_id);
  return h;
}

namespace {

std::vector<const NodeData*> canonical_nodes(std::span<const NodeData> nodes,
                                             const FederationConfig& cfg) {
  std::vector<const NodeData*> order;
  for (const auto& n : nodes) order.push_back(&n);
  std::sort(order.begin(), order.end(),
            [](const NodeData* a, const NodeData* b) { return a->node_id < b->node_id; });
  if (order.size() != cfg.node_ids.size()) {
    throw ConfigError("round has " + std::to_string(order.size()) + " nodes, config lists " +
                      std::to_string(cfg.node_ids.size()));
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i]->node_id != cfg.node_ids[i]) {
      throw ConfigError("node '" + order[i]->node_id + "' is not in the federation config");
    }
    if (order[i]->examples.empty()) {
      throw DataError("node '" + order[i]->node_id + "' has no training samples");
    }
  }
  return order;
}

}  // namespace

RoundOutcome run_round(const ParameterVector& global, std::span<const NodeData> nodes,
                       const FederationConfig& cfg, std::uint64_t round_index) {
  cfg.validate();
  check_parameters(cfg.model, global);
  const auto order = canonical_nodes(nodes, cfg);
  std::uint64_t total = 0;
  for (const auto* n : order) total += n->examples.size();

  std::vector<std::future<ParameterVector>> pending;
  pending.reserve(order.size());
  for (const auto* n : order) {
    const auto hyper = local_hyperparameters(cfg, round_index, n->node_id, total, n->examples.size());
    auto launch = order.size() > 1 ? std::launch::async : std::launch::deferred;
    pending.push_back(std::async(launch, [&cfg, &global, n, hyper] {
      return train_local(cfg.model, global, n->examples, hyper);
    }));
  }

  // Barrier: every future is drained before aggregation starts.
  RoundOutcome outcome;
  std::exception_ptr failure;
  for (std::size_t k = 0; k < order.size(); ++k) {
    try {
      outcome.updates.push_back(
          RoundUpdate{order[k]->node_id, pending[k].get(), order[k]->examples.size(), round_index});
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  outcome.global = aggregate(outcome.updates);
  return outcome;
}

MetricsReport evaluate(const ModelSpec& spec, const ParameterVector& params,
                       std::span<const Example> test) {
  std::vector<int> truth, predicted;
  truth.reserve(test.size());
  predicted.reserve(test.size());
  for (const auto& ex : test) {
    truth.push_back(static_cast<int>(ex.label) + 1);
    predicted.push_back(static_cast<int>(predict(spec, params, ex.features)) + 1);
  }
  return make_report(confusion_matrix(truth, predicted, spec.num_classes));
}

std::uint64_t TrainingHistory::digest() const {
  std::uint64_t h = fnv1a64("fedhorizon-history v1");
  auto mix_u64 = [&h](std::uint64_t v) {
    std::byte le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
    h = fnv1a64(le, h);
  };
  auto mix_real = [&](std::optional<double> v) {
    mix_u64(v ? 1 : 0);
    if (v) mix_u64(std::bit_cast<std::uint64_t>(*v));
  };
  mix_u64(initial_digest);
  mix_u64(rounds.size());
  for (const auto& r : rounds) {
    mix_u64(r.round_index);
    mix_u64(r.global_digest);
    mix_u64(r.nodes.size());
    for (const auto& n : r.nodes) {
      h = fnv1a64(n.node_id, h);
      mix_u64(n.num_samples);
      mix_u64(n.update_digest);
    }
    mix_real(r.test_macro_f1);
    mix_real(r.test_accuracy);
  }
  return h;
}

namespace {
std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}
}  // namespace

nlohmann::json to_json(const TrainingHistory& history) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : history.rounds) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : r.nodes) {
      nodes.push_back({{"id", n.node_id},
                       {"num_samples", n.num_samples},
                       {"update_digest", hex64(n.update_digest)}});
    }
    nlohmann::json entry = {{"round", r.round_index},
                            {"global_digest", hex64(r.global_digest)},
                            {"nodes", nodes},
                            {"wall_seconds", r.wall_seconds}};
    entry["test_macro_f1"] = r.test_macro_f1 ? nlohmann::json(*r.test_macro_f1) : nlohmann::json();
    entry["test_accuracy"] = r.test_accuracy ? nlohmann::json(*r.test_accuracy) : nlohmann::json();
    rounds.push_back(std::move(entry));
  }
  return {{"initial_digest", hex64(history.initial_digest)},
          {"digest", hex64(history.digest())},
          {"rounds", rounds}};
}

FederationResult run_federation(const FederationConfig& cfg, std::span<const NodeData> nodes,
                                std::span<const Example> test) {
  cfg.validate();
  FederationResult result;
  result.params = init_parameters(cfg.model, cfg.seed);
  result.history.initial_digest = result.params.digest();
  canonical_nodes(nodes, cfg);

  for (std::size_t round = 0; round < cfg.num_rounds; ++round) {
    const auto start = std::chrono::steady_clock::now();
    auto outcome = run_round(result.params, nodes, cfg, round);
    result.params = std::move(outcome.global);

    RoundRecord record;
    record.round_index = round;
    record.global_digest = result.params.digest();
    for (const auto& u : outcome.updates) {
      record.nodes.push_back(NodeRecord{u.node_id, u.num_samples, u.params.digest()});
    }
    if (!test.empty()) {
      const auto report = evaluate(cfg.model, result.params, test);
      record.test_macro_f1 = report.macro_f1;
      record.test_accuracy = report.accuracy;
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.rounds.push_back(std::move(record));
  }
  return result;
}

FederationResult run_single_node(const FederationConfig& cfg, const NodeData& node,
                                 std::span<const Example> test) {
  if (node.examples.empty()) throw DataError("site '" + node.node_id + "' has no training samples");
  FederationConfig single = cfg;
  single.node_ids = {node.node_id};
  return run_federation(single, std::span(&node, 1), test);
}

FederationResult run_centralized(const FederationConfig& cfg, const std::vector<SiteDataset>& sites,
                                 std::span<const Example> test) {
  const auto pooled = pool_sites(sites);
  if (pooled.empty()) throw DataError("pooled dataset is empty");
  return run_single_node(cfg, node_data(pooled), test);
}

NodeData node_data(const SiteDataset& site) {
  return NodeData{site.site_id, to_examples(site)};
}

}  // namespace fedhorizon
