#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedhorizon/data.hpp"
#include "fedhorizon/metrics.hpp"
#include "fedhorizon/model.hpp"

namespace fedhorizon {

struct FederationConfig {
  std::size_t num_rounds = 50;
  double alpha = 0.0;   // global regularization weight on ||theta||^2
  Hyperparameters hyper;  // hyper.reg_weight is ignored; each node gets local_reg_weight
  ModelSpec model;
  std::vector<std::string> node_ids;  // sorted, unique
  std::uint64_t seed = 0;             // parameter initialization

  std::size_t parties() const noexcept { return node_ids.size(); }
  /// Throws ConfigError on an empty or unsorted/duplicated node list, bad
  /// hyperparameters, or a bad model spec.
  void validate() const;
};

struct RoundUpdate {
  std::string node_id;
  ParameterVector params;
  std::uint64_t num_samples = 0;
  std::uint64_t round_index = 0;
};

struct NodeRecord {
  std::string node_id;
  std::uint64_t num_samples = 0;
  std::uint64_t update_digest = 0;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

struct RoundRecord {
  std::uint64_t round_index = 0;
  std::uint64_t global_digest = 0;  // aggregated parameters after this round
  std::vector<NodeRecord> nodes;    // canonical node order
  std::optional<double> test_macro_f1;
  std::optional<double> test_accuracy;
  double wall_seconds = 0.0;
};

struct TrainingHistory {
  std::uint64_t initial_digest = 0;
  std::vector<RoundRecord> rounds;

  /// FNV-1a over every deterministic field (wall times excluded). Two runs with
  /// the same data and seeds agree on this value.
  std::uint64_t digest() const;
};

nlohmann::json to_json(const TrainingHistory& history);

/// lambda_k = N_k / sum N_j. Throws on an empty list or a zero size.
std::vector<double> compute_weights(std::span<const std::uint64_t> node_sizes);

/// alpha * N_total / (N_k * P): the per-party regularization weight that makes
/// the lambda-weighted local objectives sum to the global one.
double local_reg_weight(double alpha, std::uint64_t total_samples, std::uint64_t node_samples,
                        std::size_t parties);

/// Sample-weighted mean of the updates, accumulated in ascending node_id order.
ParameterVector aggregate(std::span<const RoundUpdate> updates);

/// Seed handed to node `node_id`'s local training in round `round_index`.
std::uint64_t node_training_seed(const Hyperparameters& hyper, std::uint64_t round_index,
                                 const std::string& node_id);

/// Hyperparameters a node trains with in one round.
Hyperparameters local_hyperparameters(const FederationConfig& cfg, std::uint64_t round_index,
                                      const std::string& node_id, std::uint64_t total_samples,
                                      std::uint64_t node_samples);

struct NodeData {
  std::string node_id;
  std::vector<Example> examples;
};

struct RoundOutcome {
  ParameterVector global;
  std::vector<RoundUpdate> updates;  // canonical node order
};

/// Broadcast, local training on every node, then aggregation. Node training
/// may run on separate threads; aggregation waits for all of them.
RoundOutcome run_round(const ParameterVector& global, std::span<const NodeData> nodes,
                       const FederationConfig& cfg, std::uint64_t round_index);

/// Evaluates with argmax predictions; labels are reported 1-based.
MetricsReport evaluate(const ModelSpec& spec, const ParameterVector& params,
                       std::span<const Example> test);

struct FederationResult {
  ParameterVector params;
  TrainingHistory history;
};

/// Runs cfg.num_rounds rounds from init_parameters(cfg.model, cfg.seed). The
/// node list must match cfg.node_ids (after sorting). An empty test set skips
/// per-round evaluation.
FederationResult run_federation(const FederationConfig& cfg, std::span<const NodeData> nodes,
                                std::span<const Example> test);

/// run_federation with the single node as the whole federation.
FederationResult run_single_node(const FederationConfig& cfg, const NodeData& node,
                                 std::span<const Example> test);

/// run_single_node on pool_sites(sites); the node id is the pooled site id.
FederationResult run_centralized(const FederationConfig& cfg, const std::vector<SiteDataset>& sites,
                                 std::span<const Example> test);

/// NodeData view of a site (features required).
NodeData node_data(const SiteDataset& site);

}  // namespace fedhorizon
