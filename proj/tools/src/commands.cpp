#include "fedhorizon/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fedhorizon/data.hpp"
#include "fedhorizon/error.hpp"
#include "fedhorizon/experiment.hpp"
#include "fedhorizon/federation.hpp"
#include "fedhorizon/log.hpp"
#include "fedhorizon/metrics.hpp"
#include "fedhorizon/params_io.hpp"
#include "fedhorizon/transport.hpp"

namespace fedhorizon::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create directory " + dir.string());
}

std::string file_safe(std::string name) {
  std::replace_if(name.begin(), name.end(), [](char c) { return c == ':' || c == '/'; }, '_');
  return name;
}

std::vector<std::string> class_names() {
  std::vector<std::string> names;
  for (int label = 1; label <= static_cast<int>(kNumMechanisms); ++label) {
    names.emplace_back(mechanism_name(mechanism_from_label(label)));
  }
  return names;
}

// Training features for one manifest, prepared the way the experiment config says.
SiteDataset prepare_site(const fs::path& manifest, const std::optional<fs::path>& config_path) {
  ExtractorChoice extractor;
  std::optional<AugmentationPolicy> augmentation;
  if (config_path) {
    const auto cfg = ExperimentConfig::load(*config_path);
    extractor = cfg.extractor;
    augmentation = cfg.augmentation;
  }
  SiteDataset ds = load_manifest(manifest);
  if (augmentation) ds = augment_dataset(ds, *augmentation);
  return featurize(ds, extractor);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const auto cfg = SynthConfig::load(a.config);
  const auto out = write_synthetic(cfg, a.out);
  for (std::size_t i = 0; i < out.site_manifests.size(); ++i) {
    std::cout << "site manifest: " << out.site_manifests[i].string() << '\n';
  }
  for (const auto& p : out.train_manifests) std::cout << "train manifest: " << p.string() << '\n';
  if (out.test_manifest) std::cout << "test manifest: " << out.test_manifest->string() << '\n';
  if (out.experiment_config) std::cout << "experiment config: " << out.experiment_config->string() << '\n';
  return 0;
}

struct RunArgs {
  std::string config;
  std::vector<std::string> scenarios;
  std::size_t runs = 1;
  std::string out;
};

int cmd_run(const RunArgs& a) {
  auto cfg = ExperimentConfig::load(a.config);
  const auto data = load_experiment_data(cfg);
  std::vector<Scenario> scenarios;
  for (const auto& s : a.scenarios) {
    const auto sc = parse_scenario(s);
    if (sc == Scenario::networked) throw ConfigError("use `serve` and `node` for networked runs");
    if (std::find(scenarios.begin(), scenarios.end(), sc) == scenarios.end()) scenarios.push_back(sc);
  }
  if (scenarios.empty()) {
    scenarios = {Scenario::single_node, Scenario::centralized, Scenario::federated};
  }
  spdlog::info("running {} run(s) of {} scenario(s) on {} node(s), d = {}", a.runs, scenarios.size(),
               cfg.nodes.size(), data.feature_dim);
  const auto result = run_experiment(cfg, data, scenarios, a.runs);
  const auto table = to_table(result);
  std::cout << table;

  if (!a.out.empty()) {
    const fs::path out(a.out);
    ensure_dir(out);
    write_text(out / "result.json", to_json(result).dump(2) + "\n");
    write_text(out / "table.txt", table);
    write_text(out / "plot.csv", to_plot_csv(result));
    ensure_dir(out / "params");
    for (const auto& run : result.runs) {
      for (const auto& col : run.columns) {
        save_parameters(out / "params" /
                            (file_safe(col.column) + ".seed" + std::to_string(run.seed) + ".txt"),
                        col.params);
      }
    }
  }
  return 0;
}

struct ServeArgs {
  std::string config;
  std::string listen;
  std::string out = ".";
  std::string port_file;
};

int cmd_serve(const ServeArgs& a) {
  const auto cfg = ExperimentConfig::load(a.config);
  const auto endpoint = Endpoint::parse(a.listen);
  FederationConfig fed = cfg.federation;
  fed.model.input_dim = 0;  // taken from the nodes' JOIN
  std::vector<Example> test;
  if (cfg.test_manifest) {
    const auto ds = featurize(load_manifest(*cfg.test_manifest), cfg.extractor);
    test = to_examples(ds);
  }
  CoordinatorOptions options;
  options.node_timeout = cfg.network_timeout;

  const fs::path out(a.out);
  ensure_dir(out);
  const auto result = coordinator_serve(endpoint, fed, test, options, [&](std::uint16_t port) {
    if (!a.port_file.empty()) write_text(a.port_file, std::to_string(port) + "\n");
  });
  write_text(out / "history.json", to_json(result.history).dump(2) + "\n");
  save_parameters(out / "params.txt", result.params);
  std::cout << "history digest: " << std::hex << result.history.digest() << std::dec << '\n';
  if (!result.history.rounds.empty() && result.history.rounds.back().test_macro_f1) {
    std::cout << "final test macro-F1: " << *result.history.rounds.back().test_macro_f1 << '\n';
  }
  return 0;
}

struct NodeArgs {
  std::string id;
  std::string manifest;
  std::string connect;
  std::string config;
  int attempts = 3;
  int backoff_ms = 200;
  double idle_timeout_s = 3600.0;
};

int cmd_node(const NodeArgs& a) {
  const auto endpoint = Endpoint::parse(a.connect);
  if (a.attempts < 1) throw ConfigError("--attempts must be at least 1");
  std::optional<fs::path> config;
  if (!a.config.empty()) config = fs::path(a.config);
  const auto site = prepare_site(a.manifest, config);
  NodeSession session(a.id, to_examples(site));
  NodeOptions options;
  options.connect_attempts = a.attempts;
  options.initial_backoff = std::chrono::milliseconds(a.backoff_ms);
  options.idle_timeout =
      std::chrono::milliseconds(static_cast<long long>(a.idle_timeout_s * 1000.0));
  return node_run(endpoint, session, options);
}

struct EvalArgs {
  std::string params;
  std::string manifest;
  std::string config;
  bool binary = false;
  std::string json_out;
};

int cmd_eval(const EvalArgs& a) {
  const auto params = load_parameters(a.params);
  std::optional<fs::path> config;
  if (!a.config.empty()) config = fs::path(a.config);
  ExtractorChoice extractor;
  if (config) extractor = ExperimentConfig::load(*config).extractor;
  const auto examples = to_examples(featurize(load_manifest(a.manifest), extractor));
  if (examples.empty()) throw DataError("manifest " + a.manifest + " has no records");

  // count = (d + 1) h + (h + 1) K, so h = (count - K) / (d + 1 + K).
  ModelSpec spec;
  spec.input_dim = examples.front().features.size();
  spec.num_classes = kNumMechanisms;
  spec.dropout_rate = 0.0;
  const std::size_t k = spec.num_classes;
  const std::size_t denom = spec.input_dim + 1 + k;
  if (params.size() <= k || (params.size() - k) % denom != 0) {
    throw DataError("parameter count " + std::to_string(params.size()) +
                    " does not fit a model over " + std::to_string(spec.input_dim) + " features");
  }
  spec.hidden_dim = (params.size() - k) / denom;
  check_parameters(spec, params);

  std::vector<int> truth;
  std::vector<int> predicted;
  for (const auto& ex : examples) {
    truth.push_back(static_cast<int>(ex.label) + 1);
    predicted.push_back(static_cast<int>(predict(spec, params, ex.features)) + 1);
  }
  const auto report = make_report(confusion_matrix(truth, predicted, k));
  const auto names = class_names();
  std::cout << to_text(report, names);
  nlohmann::json doc{{"four_class", to_json(report)}};
  if (a.binary) {
    const auto bin = make_report(collapse_to_binary(truth, predicted));
    const std::vector<std::string> bin_names{"control", "pathogenic"};
    std::cout << "\nbinary (control vs pathogenic)\n" << to_text(bin, bin_names);
    doc["binary"] = to_json(bin);
  }
  if (!a.json_out.empty()) write_text(a.json_out, doc.dump(2) + "\n");
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  configure_logging();
  CLI::App app{"Federated training, simulation, and evaluation", "fedhorizon"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write synthetic site manifests and feature files");
  s->add_option("--config", synth.config, "Synthesis config (JSON)")->required();
  s->add_option("--out", synth.out, "Output directory")->required();

  RunArgs run_args;
  auto* r = app.add_subcommand("run", "Single-node, centralized, and federated runs");
  r->add_option("--config", run_args.config, "Experiment config (JSON)")->required();
  r->add_option("--scenario", run_args.scenarios, "single, central, or fed (repeatable; default all)");
  r->add_option("--runs", run_args.runs, "Repetitions with consecutive seeds")
      ->check(CLI::PositiveNumber);
  r->add_option("--out", run_args.out, "Directory for result.json, table.txt, plot.csv, params/");

  ServeArgs serve;
  auto* sv = app.add_subcommand("serve", "Coordinator for a networked federation");
  sv->add_option("--config", serve.config, "Experiment config (JSON)")->required();
  sv->add_option("--listen", serve.listen, "HOST:PORT (port 0 picks a free one)")->required();
  sv->add_option("--out", serve.out, "Directory for history.json and params.txt");
  sv->add_option("--port-file", serve.port_file, "Write the bound port here");

  NodeArgs node;
  auto* n = app.add_subcommand("node", "One federation party");
  n->add_option("--id", node.id, "Node id, as listed in the coordinator's config")->required();
  n->add_option("--manifest", node.manifest, "Local training manifest")->required();
  n->add_option("--connect", node.connect, "Coordinator HOST:PORT")->required();
  n->add_option("--config", node.config, "Experiment config for extractor/augmentation settings");
  n->add_option("--attempts", node.attempts, "Connection attempts");
  n->add_option("--backoff-ms", node.backoff_ms, "Wait before the second attempt, doubling after");
  n->add_option("--idle-timeout", node.idle_timeout_s, "Seconds to wait for the coordinator");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate saved parameters on a manifest");
  e->add_option("--params", eval.params, "Parameter file")->required();
  e->add_option("--manifest", eval.manifest, "Manifest to evaluate")->required();
  e->add_option("--config", eval.config, "Experiment config for extractor settings");
  e->add_flag("--binary", eval.binary, "Also report control vs pathogenic");
  e->add_option("--json", eval.json_out, "Write the report as JSON");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (r->parsed()) return cmd_run(run_args);
    if (sv->parsed()) return cmd_serve(serve);
    if (n->parsed()) return cmd_node(node);
    if (e->parsed()) return cmd_eval(eval);
  } catch (const Error& err) {
    spdlog::error("{}", err.what());
    return err.exit_code();
  } catch (const fs::filesystem_error& err) {
    spdlog::error("{}", err.what());
    return static_cast<int>(ErrorCategory::data);
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return static_cast<int>(ErrorCategory::config);
  }
  return 1;
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace fedhorizon::cli
