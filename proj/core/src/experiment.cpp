#include "fedhorizon/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "fedhorizon/error.hpp"
#include "fedhorizon/random.hpp"

namespace fedhorizon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kConfigVersion = 1;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void check_version(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("config_version") || doc.at("config_version") != kConfigVersion) {
    throw ConfigError("config_version must be 1");
  }
}

template <typename T>
T field(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

template <typename T>
T required(const json& obj, const char* key) {
  if (!obj.contains(key)) throw ConfigError(std::string("config field '") + key + "' is missing");
  return field<T>(obj, key, T{});
}

void read_training_section(const json& doc, FederationConfig& fed) {
  fed.num_rounds = field<std::size_t>(doc, "rounds", fed.num_rounds);
  fed.alpha = field<double>(doc, "alpha", fed.alpha);
  if (doc.contains("hyper")) {
    const auto& h = doc.at("hyper");
    fed.hyper.learning_rate = field<double>(h, "lr", fed.hyper.learning_rate);
    fed.hyper.local_epochs = field<std::size_t>(h, "local_epochs", fed.hyper.local_epochs);
    fed.hyper.batch_size = field<std::size_t>(h, "batch_size", fed.hyper.batch_size);
    fed.hyper.seed = field<std::uint64_t>(h, "seed", fed.hyper.seed);
  }
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    fed.model.hidden_dim = field<std::size_t>(m, "hidden_dim", fed.model.hidden_dim);
    fed.model.dropout_rate = field<double>(m, "dropout_rate", fed.model.dropout_rate);
  }
  fed.seed = fed.hyper.seed;
}

json training_section_json(const FederationConfig& fed) {
  return {{"rounds", fed.num_rounds},
          {"alpha", fed.alpha},
          {"hyper",
           {{"lr", fed.hyper.learning_rate},
            {"local_epochs", fed.hyper.local_epochs},
            {"batch_size", fed.hyper.batch_size},
            {"seed", fed.hyper.seed}}},
          {"model", {{"hidden_dim", fed.model.hidden_dim}, {"dropout_rate", fed.model.dropout_rate}}}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Experiment config

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
  check_version(doc);
  ExperimentConfig cfg;
  read_training_section(doc, cfg.federation);

  if (!doc.contains("nodes") || !doc.at("nodes").is_array() || doc.at("nodes").empty()) {
    throw ConfigError("config needs a non-empty 'nodes' array");
  }
  for (const auto& n : doc.at("nodes")) {
    NodeEntry entry;
    entry.id = required<std::string>(n, "id");
    entry.manifest = base_dir / required<std::string>(n, "manifest");
    if (entry.id.empty()) throw ConfigError("node id must not be empty");
    cfg.nodes.push_back(std::move(entry));
  }
  std::sort(cfg.nodes.begin(), cfg.nodes.end(),
            [](const NodeEntry& a, const NodeEntry& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < cfg.nodes.size(); ++i) {
    if (i > 0 && cfg.nodes[i].id == cfg.nodes[i - 1].id) {
      throw ConfigError("duplicate node id '" + cfg.nodes[i].id + "'");
    }
    cfg.federation.node_ids.push_back(cfg.nodes[i].id);
  }

  if (doc.contains("test_manifest") && !doc.at("test_manifest").is_null()) {
    cfg.test_manifest = base_dir / required<std::string>(doc, "test_manifest");
  }
  if (doc.contains("extractor")) {
    const auto& e = doc.at("extractor");
    cfg.extractor.id = field<std::string>(e, "id", cfg.extractor.id);
    if (e.contains("config")) cfg.extractor.config = e.at("config");
  }
  if (doc.contains("augmentation") && !doc.at("augmentation").is_null()) {
    const auto& a = doc.at("augmentation");
    AugmentationPolicy policy;
    policy.rotation_degrees = field<std::vector<int>>(a, "rotations", policy.rotation_degrees);
    policy.horizontal_flip = field<bool>(a, "flip", policy.horizontal_flip);
    policy.brightness_factors = field<std::vector<double>>(a, "brightness", policy.brightness_factors);
    policy.validate();
    cfg.augmentation = policy;
  }
  if (doc.contains("network")) {
    const double seconds = field<double>(doc.at("network"), "timeout_s", 300.0);
    if (!(seconds > 0.0)) throw ConfigError("network.timeout_s must be positive");
    cfg.network_timeout = std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
  }

  // input_dim is not known until data is loaded; validate the rest now.
  FederationConfig probe = cfg.federation;
  probe.model.input_dim = 1;
  probe.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

json ExperimentConfig::to_json() const {
  json doc = training_section_json(federation);
  doc["config_version"] = kConfigVersion;
  json nodes_json = json::array();
  for (const auto& n : nodes) nodes_json.push_back({{"id", n.id}, {"manifest", n.manifest.generic_string()}});
  doc["nodes"] = nodes_json;
  doc["test_manifest"] = test_manifest ? json(test_manifest->generic_string()) : json();
  doc["extractor"] = {{"id", extractor.id}, {"config", extractor.config}};
  if (augmentation) {
    doc["augmentation"] = {{"rotations", augmentation->rotation_degrees},
                           {"flip", augmentation->horizontal_flip},
                           {"brightness", augmentation->brightness_factors}};
  }
  doc["network"] = {{"timeout_s", static_cast<double>(network_timeout.count()) / 1000.0}};
  return doc;
}

ExperimentData load_experiment_data(ExperimentConfig& cfg) {
  ExperimentData data;
  std::optional<std::size_t> dim;
  auto note_dim = [&dim](const SiteDataset& ds) {
    for (const auto& r : ds.records) {
      if (dim && *dim != r.features().size()) {
        throw DataError("record " + r.sample_id + " has " + std::to_string(r.features().size()) +
                        " features, expected " + std::to_string(*dim));
      }
      dim = r.features().size();
    }
  };

  for (const auto& node : cfg.nodes) {
    SiteDataset ds = load_manifest(node.manifest);
    if (ds.empty()) throw DataError("manifest for node '" + node.id + "' is empty");
    if (cfg.augmentation) ds = augment_dataset(ds, *cfg.augmentation);
    ds = featurize(ds, cfg.extractor);
    // The node id names the party even if the manifest uses another site id.
    ds.site_id = node.id;
    for (auto& r : ds.records) r.site_id = node.id;
    note_dim(ds);
    data.sites.push_back(std::move(ds));
  }
  if (cfg.test_manifest) {
    data.test = featurize(load_manifest(*cfg.test_manifest), cfg.extractor);
    note_dim(data.test);
    data.test_examples = to_examples(data.test);
  }
  if (!dim || *dim == 0) throw DataError("no features found in the training manifests");
  data.feature_dim = *dim;
  cfg.federation.model.input_dim = *dim;
  return data;
}

// ---------------------------------------------------------------------------
// Scenario runs

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::single_node: return "single_node";
    case Scenario::centralized: return "centralized";
    case Scenario::federated: return "federated";
    case Scenario::networked: return "networked";
  }
  return "unknown";
}

Scenario parse_scenario(std::string_view text) {
  if (text == "single" || text == "single_node") return Scenario::single_node;
  if (text == "central" || text == "centralized") return Scenario::centralized;
  if (text == "fed" || text == "federated") return Scenario::federated;
  if (text == "networked") return Scenario::networked;
  throw ConfigError("unknown scenario '" + std::string(text) + "'");
}

Summary mean_std(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (const double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (const double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

std::vector<std::string> ExperimentResult::column_names() const {
  std::vector<std::string> names;
  if (!runs.empty()) {
    for (const auto& c : runs.front().columns) names.push_back(c.column);
  }
  return names;
}

namespace {

double metric_of(const MetricsReport& r, const std::string& metric) {
  if (metric == "macro_f1") return r.macro_f1;
  if (metric == "accuracy") return r.accuracy;
  if (metric.rfind("f1_", 0) == 0) {
    const auto cls = static_cast<std::size_t>(std::stoul(metric.substr(3)));
    if (cls >= 1 && cls <= r.per_class.size()) return r.per_class[cls - 1].f1;
  }
  throw ConfigError("unknown metric '" + metric + "'");
}

ColumnResult column_from(std::string name, const ModelSpec& spec, const FederationResult& fr,
                         std::span<const Example> test) {
  ColumnResult col;
  col.column = std::move(name);
  col.report = evaluate(spec, fr.params, test);
  for (const auto& r : fr.history.rounds) col.macro_f1_by_round.push_back(r.test_macro_f1.value_or(0.0));
  col.history_digest = fr.history.digest();
  col.params = fr.params;
  return col;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

Summary ExperimentResult::summarize(const std::string& column, const std::string& metric) const {
  std::vector<double> values;
  for (const auto& run : runs) {
    for (const auto& c : run.columns) {
      if (c.column == column) values.push_back(metric_of(c.report, metric));
    }
  }
  if (values.empty()) throw ConfigError("no results for column '" + column + "'");
  return mean_std(values);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                                const std::vector<Scenario>& scenarios, std::size_t n_runs) {
  if (n_runs == 0) throw ConfigError("need at least one run");
  if (data.test_examples.empty()) throw ConfigError("experiment runs need a test manifest");
  if (scenarios.empty()) throw ConfigError("no scenarios requested");

  std::vector<NodeData> nodes;
  for (const auto& s : data.sites) nodes.push_back(node_data(s));

  ExperimentResult result;
  result.scenarios = scenarios;
  std::uint64_t id_hash = fnv1a64(cfg.to_json().dump());
  for (const auto s : scenarios) id_hash = fnv1a64(to_string(s), id_hash);
  id_hash = fnv1a64(std::to_string(n_runs), id_hash);
  result.run_id = hex64(id_hash);

  for (std::size_t i = 0; i < n_runs; ++i) {
    FederationConfig fed = cfg.federation;
    fed.model.input_dim = data.feature_dim;
    fed.hyper.seed = cfg.federation.hyper.seed + i;
    fed.seed = fed.hyper.seed;
    RunResult run;
    run.seed = fed.hyper.seed;
    for (const auto scenario : scenarios) {
      switch (scenario) {
        case Scenario::single_node:
          for (const auto& node : nodes) {
            const auto fr = run_single_node(fed, node, data.test_examples);
            run.columns.push_back(column_from("single:" + node.node_id, fed.model, fr, data.test_examples));
          }
          break;
        case Scenario::centralized: {
          const auto fr = run_centralized(fed, data.sites, data.test_examples);
          run.columns.push_back(column_from("centralized", fed.model, fr, data.test_examples));
          break;
        }
        case Scenario::federated: {
          const auto fr = run_federation(fed, nodes, data.test_examples);
          run.columns.push_back(column_from("federated", fed.model, fr, data.test_examples));
          break;
        }
        case Scenario::networked:
          throw ConfigError("the networked scenario runs through `serve` and `node`");
      }
    }
    result.seeds.push_back(run.seed);
    result.runs.push_back(std::move(run));
  }
  return result;
}

json to_json(const ExperimentResult& result) {
  json runs = json::array();
  for (const auto& run : result.runs) {
    json cols = json::array();
    for (const auto& c : run.columns) {
      cols.push_back({{"column", c.column},
                      {"metrics", to_json(c.report)},
                      {"history_digest", hex64(c.history_digest)},
                      {"macro_f1_by_round", c.macro_f1_by_round}});
    }
    runs.push_back({{"seed", run.seed}, {"columns", cols}});
  }
  json scenarios = json::array();
  for (const auto s : result.scenarios) scenarios.push_back(std::string(to_string(s)));

  json summary = json::object();
  if (!result.runs.empty()) {
    const auto k = result.runs.front().columns.front().report.per_class.size();
    for (const auto& col : result.column_names()) {
      json entry = json::object();
      std::vector<std::string> metrics{"macro_f1", "accuracy"};
      for (std::size_t c = 1; c <= k; ++c) metrics.push_back("f1_" + std::to_string(c));
      for (const auto& m : metrics) {
        const auto s = result.summarize(col, m);
        entry[m] = {{"mean", s.mean}, {"std", s.std}};
      }
      summary[col] = entry;
    }
  }
  return {{"run_id", result.run_id},
          {"scenarios", scenarios},
          {"n_runs", result.runs.size()},
          {"seeds", result.seeds},
          {"std_formula", "population"},
          {"runs", runs},
          {"summary", summary}};
}

std::string to_table(const ExperimentResult& result) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  const auto columns = result.column_names();
  if (columns.empty()) return "";
  const auto k = result.runs.front().columns.front().report.per_class.size();
  std::vector<std::string> metrics{"macro_f1", "accuracy"};
  for (std::size_t c = 1; c <= k; ++c) metrics.push_back("f1_" + std::to_string(c));

  std::vector<std::vector<std::string>> cells;
  for (const auto& m : metrics) {
    std::vector<std::string> row{m};
    for (const auto& col : columns) {
      const auto s = result.summarize(col, m);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(6) << s.mean << " (" << s.std << ")";
      row.push_back(cell.str());
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(columns.size() + 1, 6);
  for (std::size_t c = 0; c < columns.size(); ++c) width[c + 1] = columns[c].size();
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  out << std::left << std::setw(static_cast<int>(width[0])) << "metric";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out << "  " << std::right << std::setw(static_cast<int>(width[c + 1])) << columns[c];
  }
  out << '\n';
  for (const auto& row : cells) {
    out << std::left << std::setw(static_cast<int>(width[0])) << row[0];
    for (std::size_t c = 1; c < row.size(); ++c) {
      out << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
    }
    out << '\n';
  }
  out << "runs: " << result.runs.size() << ", mean (population std)\n";
  return out.str();
}

std::string to_plot_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "column,run,seed,round,macro_f1\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    for (const auto& c : result.runs[r].columns) {
      for (std::size_t round = 0; round < c.macro_f1_by_round.size(); ++round) {
        out << c.column << ',' << r << ',' << result.runs[r].seed << ',' << round << ','
            << c.macro_f1_by_round[round] << '\n';
      }
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic data on disk

SynthConfig SynthConfig::from_json(const json& doc) {
  check_version(doc);
  SynthConfig cfg;
  cfg.seed = field<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.feature_dim = field<std::size_t>(doc, "feature_dim", cfg.feature_dim);
  cfg.class_separation = field<double>(doc, "class_separation", cfg.class_separation);
  if (!doc.contains("sites") || !doc.at("sites").is_array() || doc.at("sites").empty()) {
    throw ConfigError("synthesis config needs a non-empty 'sites' array");
  }
  std::set<std::string> seen;
  for (const auto& s : doc.at("sites")) {
    SynthSite site;
    site.site_id = required<std::string>(s, "id");
    site.class_counts = required<std::vector<std::size_t>>(s, "class_counts");
    if (!seen.insert(site.site_id).second) throw ConfigError("duplicate site id " + site.site_id);
    cfg.holdout.push_back(field<std::size_t>(s, "holdout", 0));
    cfg.sites.push_back(std::move(site));
  }
  if (doc.contains("experiment")) cfg.experiment = doc.at("experiment");
  return cfg;
}

SynthConfig SynthConfig::load(const fs::path& path) { return from_json(read_json_file(path)); }

SynthSplit synthesize_split(const SynthConfig& cfg) {
  SynthSplit out;
  out.full = synthesize_dataset(cfg.sites, cfg.feature_dim, cfg.class_separation, cfg.seed);
  out.test.site_id = "holdout";
  for (std::size_t k = 0; k < out.full.size(); ++k) {
    const auto& site = out.full[k];
    const auto ids = cfg.holdout[k] == 0
                         ? std::set<std::string>{}
                         : select_holdout_patients(site, cfg.holdout[k],
                                                   derive_seed(cfg.seed, k, "holdout:" + site.site_id));
    auto split = patient_level_split(site, SplitPlan::explicit_ids(ids));
    for (auto& rec : split.test.records) {
      rec.site_id = out.test.site_id;
      out.test.records.push_back(std::move(rec));
    }
    out.train.push_back(std::move(split.train));
  }
  return out;
}

SynthOutput write_synthetic(const SynthConfig& cfg, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw ConfigError("cannot create output directory " + out_dir.string());
  }
  const auto split = synthesize_split(cfg);
  SynthOutput out;
  for (const auto& site : split.full) {
    const auto path = out_dir / (site.site_id + ".csv");
    save_manifest(path, site, "features");
    out.site_manifests.push_back(path);
  }
  if (split.test.empty()) return out;

  json nodes = json::array();
  for (const auto& site : split.train) {
    const auto path = out_dir / (site.site_id + ".train.csv");
    save_manifest(path, site, "features");
    out.train_manifests.push_back(path);
    nodes.push_back({{"id", site.site_id}, {"manifest", path.filename().string()}});
  }
  out.test_manifest = out_dir / "test.csv";
  save_manifest(*out.test_manifest, split.test, "features");

  FederationConfig defaults;
  defaults.hyper.seed = cfg.seed;
  if (cfg.experiment.is_object()) read_training_section(cfg.experiment, defaults);
  json experiment = training_section_json(defaults);
  experiment["config_version"] = kConfigVersion;
  experiment["nodes"] = nodes;
  experiment["test_manifest"] = "test.csv";
  experiment["extractor"] = {{"id", "gridpool"}, {"config", {{"grid", 4}}}};
  out.experiment_config = out_dir / "experiment.json";
  std::ofstream f(*out.experiment_config);
  if (!f) throw ConfigError("cannot write " + out.experiment_config->string());
  f << experiment.dump(2) << '\n';
  return out;
}

}  // namespace fedhorizon
