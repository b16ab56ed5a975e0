#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedhorizon/data.hpp"
#include "fedhorizon/federation.hpp"
#include "fedhorizon/metrics.hpp"

namespace fedhorizon {

/// Experiment config, JSON schema version 1. Paths are relative to the file.
///
///   {
///     "config_version": 1,
///     "rounds": 50,
///     "alpha": 0.001,
///     "hyper": {"lr": 0.05, "local_epochs": 1, "batch_size": 32, "seed": 1},
///     "model": {"hidden_dim": 64, "dropout_rate": 0.2},            optional
///     "nodes": [{"id": "nih", "manifest": "nih.train.csv"}, ...],
///     "test_manifest": "test.csv",                                  optional
///     "extractor": {"id": "gridpool", "config": {"grid": 4}},       optional
///     "augmentation": {"rotations": [0, 45], "flip": true,
///                      "brightness": [1.0, 1.25, 1.5]},            optional
///     "network": {"timeout_s": 300}                                 optional
///   }
///
/// Parameter initialization uses the same seed as hyper.seed.
struct NodeEntry {
  std::string id;
  std::filesystem::path manifest;
};

struct ExperimentConfig {
  FederationConfig federation;  // node_ids sorted; model.input_dim set from data
  std::vector<NodeEntry> nodes;  // sorted by id
  std::optional<std::filesystem::path> test_manifest;
  ExtractorChoice extractor;
  std::optional<AugmentationPolicy> augmentation;
  std::chrono::milliseconds network_timeout{300'000};

  /// Throws ConfigError on schema problems.
  static ExperimentConfig from_json(const nlohmann::json& doc,
                                    const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct ExperimentData {
  std::vector<SiteDataset> sites;  // featurized training sets, node order
  SiteDataset test;                // featurized, may be empty
  std::vector<Example> test_examples;
  std::size_t feature_dim = 0;
};

/// Loads every manifest, augments training images when configured, extracts
/// features, and fixes cfg.federation.model.input_dim.
ExperimentData load_experiment_data(ExperimentConfig& cfg);

enum class Scenario { single_node, centralized, federated, networked };

std::string_view to_string(Scenario s);
/// Accepts single, central, fed (and the long names).
Scenario parse_scenario(std::string_view text);

struct ColumnResult {
  std::string column;  // "single:<site>", "centralized", "federated", "networked"
  MetricsReport report;
  std::vector<double> macro_f1_by_round;
  std::uint64_t history_digest = 0;
  ParameterVector params;  // final parameters
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<ColumnResult> columns;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct ExperimentResult {
  std::string run_id;
  std::vector<Scenario> scenarios;
  std::vector<std::uint64_t> seeds;
  std::vector<RunResult> runs;

  std::vector<std::string> column_names() const;
  /// Mean and population std of a metric over runs for one column. Metric
  /// names: macro_f1, accuracy, f1_<class label 1..K>.
  Summary summarize(const std::string& column, const std::string& metric) const;
};

Summary mean_std(std::span<const double> values);

/// n_runs repetitions with hyper.seed + i (and the same init seed).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                                const std::vector<Scenario>& scenarios, std::size_t n_runs);

nlohmann::json to_json(const ExperimentResult& result);
/// Rows are metrics, columns are scenario columns, cells "mean (std)".
std::string to_table(const ExperimentResult& result);
/// column,run,seed,round,macro_f1 for external plotting.
std::string to_plot_csv(const ExperimentResult& result);

/// Synthesis config, schema version 1:
///   {
///     "config_version": 1, "seed": 7, "feature_dim": 16, "class_separation": 2.0,
///     "sites": [{"id": "nih", "class_counts": [84, 71, 94, 51], "holdout": 20}, ...],
///     "experiment": { rounds, alpha, hyper, model }                optional
///   }
struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t feature_dim = 16;
  double class_separation = 2.0;
  std::vector<SynthSite> sites;
  std::vector<std::size_t> holdout;  // per site, records
  nlohmann::json experiment = nlohmann::json::object();

  static SynthConfig from_json(const nlohmann::json& doc);
  static SynthConfig load(const std::filesystem::path& path);
};

struct SynthOutput {
  std::vector<std::filesystem::path> site_manifests;   // every record of each site
  std::vector<std::filesystem::path> train_manifests;  // when a hold-out is requested
  std::optional<std::filesystem::path> test_manifest;
  std::optional<std::filesystem::path> experiment_config;
};

/// Synthesizes the sites and writes manifests plus feature files under out_dir.
/// With hold-outs, also writes `<site>.train.csv`, `test.csv` (site id
/// "holdout"), and a ready-to-run `experiment.json`.
SynthOutput write_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir);

/// The per-site datasets, training splits, and pooled hold-out, in memory.
struct SynthSplit {
  std::vector<SiteDataset> full;
  std::vector<SiteDataset> train;
  SiteDataset test;
};
SynthSplit synthesize_split(const SynthConfig& cfg);

}  // namespace fedhorizon
