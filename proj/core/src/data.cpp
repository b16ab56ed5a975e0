#include "fedhorizon/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "fedhorizon/error.hpp"
#include "fedhorizon/params_io.hpp"
#include "fedhorizon/random.hpp"

namespace fedhorizon {

namespace fs = std::filesystem;

std::string_view mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::control: return "control";
    case Mechanism::glycine_substitution: return "glycine_substitution";
    case Mechanism::pseudoexon_insertion: return "pseudoexon_insertion";
    case Mechanism::exon_skipping: return "exon_skipping";
  }
  return "unknown";
}

Mechanism mechanism_from_label(int label) {
  if (label < 1 || label > static_cast<int>(kNumMechanisms)) {
    throw DataError("label " + std::to_string(label) + " outside 1..4");
  }
  return static_cast<Mechanism>(label);
}

std::set<std::string> SiteDataset::patient_ids() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.patient_id);
  return ids;
}

std::vector<std::size_t> SiteDataset::class_counts() const {
  std::vector<std::size_t> counts(kNumMechanisms, 0);
  for (const auto& r : records) ++counts[class_index(r.label)];
  return counts;
}

void SiteDataset::validate() const {
  for (const auto& r : records) {
    if (r.site_id != site_id) {
      throw DataError("record " + r.sample_id + " belongs to site '" + r.site_id +
                      "', dataset is '" + site_id + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Feature files

namespace {
constexpr std::string_view kFeaturesMagic = "fedhorizon-features";

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}
}  // namespace

FeatureVector load_features(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(strip_cr(header));
  std::string magic, version;
  long long dim = -1;
  hs >> magic >> version >> dim;
  if (magic != kFeaturesMagic || version != "v1" || dim < 0) {
    throw DataError(path.string() + ": bad feature header '" + header + "'");
  }
  std::string line;
  std::getline(in, line);
  line = strip_cr(line);
  FeatureVector values;
  if (dim > 0) {
    for (const auto& field : split_commas(line)) values.push_back(parse_real(field));
  }
  if (values.size() != static_cast<std::size_t>(dim)) {
    throw DataError(path.string() + ": header declares " + std::to_string(dim) +
                    " features, found " + std::to_string(values.size()));
  }
  return values;
}

void save_features(const fs::path& path, const FeatureVector& features) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write feature file " + path.string());
  out << kFeaturesMagic << " v1 " << features.size() << '\n';
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i) out << ',';
    out << format_shortest(features[i]);
  }
  out << '\n';
}

// ---------------------------------------------------------------------------
// Manifests

namespace {
constexpr std::string_view kManifestHeader = "sample_id,patient_id,site_id,label,kind,path";

void check_id_field(const std::string& value, const char* what) {
  if (value.empty()) throw DataError(std::string(what) + " must not be empty");
  if (value.find_first_of(",\n\r\"") != std::string::npos) {
    throw DataError(std::string(what) + " '" + value + "' contains a reserved character");
  }
}
}  // namespace

SiteDataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();

  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader) {
    throw DataError(path.string() + ":1: expected header '" + std::string(kManifestHeader) + "'");
  }

  SiteDataset ds;
  bool site_known = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto fields = split_commas(line);
    if (fields.size() != 6) {
      throw DataError(where + "expected 6 fields, found " + std::to_string(fields.size()));
    }
    SampleRecord rec;
    rec.sample_id = fields[0];
    rec.patient_id = fields[1];
    rec.site_id = fields[2];
    if (rec.sample_id.empty() || rec.patient_id.empty() || rec.site_id.empty()) {
      throw DataError(where + "empty id field");
    }
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(where + "label '" + fields[3] + "' is not an integer");
    }
    if (label < 1 || label > static_cast<int>(kNumMechanisms)) {
      throw DataError(where + "label " + std::to_string(label) + " outside 1..4");
    }
    rec.label = static_cast<Mechanism>(label);

    const fs::path payload = base / fields[5];
    if (!fs::exists(payload)) throw DataError(where + "missing payload file " + payload.string());
    try {
      if (fields[4] == "features") {
        rec.payload = load_features(payload);
      } else if (fields[4] == "image") {
        rec.payload = read_ppm(payload);
      } else {
        throw DataError("unknown kind '" + fields[4] + "'");
      }
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }

    if (!site_known) {
      ds.site_id = rec.site_id;
      site_known = true;
    } else if (rec.site_id != ds.site_id) {
      throw DataError(where + "site '" + rec.site_id + "' differs from '" + ds.site_id + "'");
    }
    ds.records.push_back(std::move(rec));
  }
  if (!site_known) ds.site_id = path.stem().string();
  return ds;
}

void save_manifest(const fs::path& path, const SiteDataset& dataset, const std::string& payload_dir) {
  dataset.validate();
  const fs::path base = path.parent_path();
  const fs::path payload_root = base / payload_dir;
  std::error_code ec;
  fs::create_directories(payload_root, ec);
  if (ec) throw DataError("cannot create " + payload_root.string() + ": " + ec.message());

  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& rec : dataset.records) {
    check_id_field(rec.sample_id, "sample_id");
    check_id_field(rec.patient_id, "patient_id");
    check_id_field(rec.site_id, "site_id");
    const bool features = rec.has_features();
    const std::string file = rec.sample_id + (features ? ".feat" : ".ppm");
    if (features) {
      save_features(payload_root / file, rec.features());
    } else {
      write_ppm(payload_root / file, rec.image());
    }
    out << rec.sample_id << ',' << rec.patient_id << ',' << rec.site_id << ','
        << label_value(rec.label) << ',' << (features ? "features" : "image") << ','
        << (fs::path(payload_dir) / file).generic_string() << '\n';
  }
  if (!out) throw DataError("failed writing manifest " + path.string());
}

// ---------------------------------------------------------------------------
// Splits

SplitResult patient_level_split(const SiteDataset& dataset, const SplitPlan& plan) {
  const auto patients = dataset.patient_ids();
  std::set<std::string> test_ids;
  if (plan.test_patient_ids) {
    for (const auto& id : *plan.test_patient_ids) {
      if (!patients.contains(id)) {
        throw DataError("split names patient '" + id + "' absent from site " + dataset.site_id);
      }
    }
    test_ids = *plan.test_patient_ids;
  } else {
    if (!(plan.test_fraction >= 0.0 && plan.test_fraction < 1.0)) {
      throw ConfigError("test_fraction must lie in [0, 1)");
    }
    std::vector<std::string> order(patients.begin(), patients.end());
    Rng rng(plan.seed);
    rng.shuffle(std::span(order));
    const auto n_test = static_cast<std::size_t>(
        std::llround(plan.test_fraction * static_cast<double>(order.size())));
    test_ids.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  }

  SplitResult out;
  out.train.site_id = dataset.site_id;
  out.test.site_id = dataset.site_id;
  for (const auto& rec : dataset.records) {
    (test_ids.contains(rec.patient_id) ? out.test : out.train).records.push_back(rec);
  }
  return out;
}

std::set<std::string> select_holdout_patients(const SiteDataset& dataset, std::size_t target,
                                              std::uint64_t seed) {
  if (target > dataset.size()) {
    throw DataError("hold-out of " + std::to_string(target) + " exceeds site size " +
                    std::to_string(dataset.size()));
  }
  // patient -> (class, record count); a patient's records share one class here.
  std::map<std::string, std::pair<std::size_t, std::size_t>> patients;
  for (const auto& rec : dataset.records) {
    auto [it, fresh] = patients.try_emplace(rec.patient_id, class_index(rec.label), 0);
    if (!fresh && it->second.first != class_index(rec.label)) {
      throw DataError("patient " + rec.patient_id + " has records in several classes");
    }
    ++it->second.second;
  }
  std::vector<std::string> order;
  for (const auto& [id, info] : patients) order.push_back(id);
  Rng rng(seed);
  rng.shuffle(std::span(order));

  std::vector<std::size_t> quota(kNumMechanisms, target / kNumMechanisms);
  for (std::size_t c = 0; c < target % kNumMechanisms; ++c) ++quota[c];

  // reach[c][i][s]: some subset of class c's patients i.. (in Rng order) has s records.
  std::vector<std::vector<std::string>> pool(kNumMechanisms);
  for (const auto& id : order) pool[patients.at(id).first].push_back(id);
  std::vector<std::vector<std::vector<char>>> reach(kNumMechanisms);
  for (std::size_t c = 0; c < kNumMechanisms; ++c) {
    const std::size_t n = pool[c].size();
    reach[c].assign(n + 1, std::vector<char>(target + 1, 0));
    reach[c][n][0] = 1;
    for (std::size_t i = n; i-- > 0;) {
      const std::size_t count = patients.at(pool[c][i]).second;
      for (std::size_t s = 0; s <= target; ++s) {
        reach[c][i][s] = reach[c][i + 1][s] || (count <= s && reach[c][i + 1][s - count]);
      }
    }
  }

  // Per-class totals summing to target, closest to the quotas in L1.
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::vector<std::size_t>> cost(kNumMechanisms + 1, std::vector<std::size_t>(target + 1, kNone));
  std::vector<std::vector<std::size_t>> pick(kNumMechanisms, std::vector<std::size_t>(target + 1, 0));
  cost[0][0] = 0;
  for (std::size_t c = 0; c < kNumMechanisms; ++c) {
    for (std::size_t t = 0; t <= target; ++t) {
      for (std::size_t s = 0; s <= t; ++s) {
        if (!reach[c][0][s] || cost[c][t - s] == kNone) continue;
        const std::size_t dev = s > quota[c] ? s - quota[c] : quota[c] - s;
        if (cost[c][t - s] + dev < cost[c + 1][t]) {
          cost[c + 1][t] = cost[c][t - s] + dev;
          pick[c][t] = s;
        }
      }
    }
  }
  if (cost[kNumMechanisms][target] == kNone) {
    throw DataError("cannot assemble a patient-disjoint hold-out of exactly " +
                    std::to_string(target) + " records from site " + dataset.site_id);
  }

  std::set<std::string> chosen;
  std::size_t t = target;
  for (std::size_t c = kNumMechanisms; c-- > 0;) {
    std::size_t s = pick[c][t];
    t -= s;
    // Earliest patients first among those that still allow an exact total.
    for (std::size_t i = 0; i < pool[c].size() && s > 0; ++i) {
      const std::size_t count = patients.at(pool[c][i]).second;
      if (count <= s && reach[c][i + 1][s - count]) {
        chosen.insert(pool[c][i]);
        s -= count;
      }
    }
  }
  return chosen;
}

// ---------------------------------------------------------------------------
// Synthetic data

std::vector<std::vector<double>> synthetic_class_means(std::size_t feature_dim,
                                                       double class_separation) {
  std::vector<std::vector<double>> means(kNumMechanisms, std::vector<double>(feature_dim, 0.0));
  const double offset = class_separation / std::sqrt(2.0);
  for (std::size_t c = 0; c < kNumMechanisms; ++c) means[c][c % feature_dim] = offset;
  return means;
}

std::vector<SiteDataset> synthesize_dataset(const std::vector<SynthSite>& sites,
                                            std::size_t feature_dim, double class_separation,
                                            std::uint64_t seed) {
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
    throw ConfigError("class_separation must be nonnegative");
  }
  if (sites.empty()) throw ConfigError("synthetic dataset needs at least one site");
  for (const auto& site : sites) {
    if (site.class_counts.size() != kNumMechanisms) {
      throw ConfigError("site " + site.site_id + " needs exactly 4 class counts");
    }
    check_id_field(site.site_id, "site_id");
    std::size_t site_total = 0;
    for (const auto n : site.class_counts) site_total += n;
    if (site_total == 0) throw ConfigError("site " + site.site_id + " would have zero samples");
  }

  const auto means = synthetic_class_means(feature_dim, class_separation);
  std::vector<SiteDataset> out;
  for (std::size_t k = 0; k < sites.size(); ++k) {
    const auto& site = sites[k];
    Rng rng(derive_seed(seed, k, site.site_id));
    SiteDataset ds;
    ds.site_id = site.site_id;
    std::size_t sample_no = 0;
    std::size_t patient_no = 0;
    for (std::size_t c = 0; c < kNumMechanisms; ++c) {
      std::size_t remaining = site.class_counts[c];
      while (remaining > 0) {
        std::size_t group = 2 + static_cast<std::size_t>(rng.below(3));
        group = std::min(group, remaining);
        remaining -= group;
        char pid[32];
        std::snprintf(pid, sizeof(pid), "-p%04zu", patient_no++);
        for (std::size_t g = 0; g < group; ++g) {
          SampleRecord rec;
          char sid[32];
          std::snprintf(sid, sizeof(sid), "-s%05zu", sample_no++);
          rec.sample_id = site.site_id + sid;
          rec.patient_id = site.site_id + pid;
          rec.site_id = site.site_id;
          rec.label = static_cast<Mechanism>(c + 1);
          FeatureVector x(feature_dim);
          for (std::size_t i = 0; i < feature_dim; ++i) x[i] = means[c][i] + rng.normal();
          rec.payload = std::move(x);
          ds.records.push_back(std::move(rec));
        }
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipelines

SiteDataset augment_dataset(const SiteDataset& dataset, const AugmentationPolicy& policy) {
  policy.validate();
  SiteDataset out;
  out.site_id = dataset.site_id;
  for (const auto& rec : dataset.records) {
    if (rec.has_features()) {
      out.records.push_back(rec);
      continue;
    }
    const auto variants = augment(rec.image(), policy, true);
    std::size_t v = 0;
    for (const int deg : policy.rotation_degrees) {
      for (int flip = 0; flip < (policy.horizontal_flip ? 2 : 1); ++flip) {
        for (const double factor : policy.brightness_factors) {
          SampleRecord copy;
          copy.sample_id = rec.sample_id + "~r" + std::to_string(deg) + (flip ? "f" : "") + "b" +
                           format_shortest(factor);
          copy.patient_id = rec.patient_id;
          copy.site_id = rec.site_id;
          copy.label = rec.label;
          copy.payload = variants[v++];
          out.records.push_back(std::move(copy));
        }
      }
    }
  }
  return out;
}

SiteDataset featurize(const SiteDataset& dataset, const ExtractorChoice& extractor) {
  SiteDataset out;
  out.site_id = dataset.site_id;
  out.records.reserve(dataset.size());
  for (const auto& rec : dataset.records) {
    SampleRecord copy = rec;
    if (!rec.has_features()) {
      copy.payload = extract_features(preprocess(rec.image()), extractor.id, extractor.config);
    }
    out.records.push_back(std::move(copy));
  }
  return out;
}

std::vector<Example> to_examples(const SiteDataset& dataset) {
  std::vector<Example> out;
  out.reserve(dataset.size());
  for (const auto& rec : dataset.records) {
    if (!rec.has_features()) {
      throw DataError("record " + rec.sample_id + " has no features; run feature extraction first");
    }
    if (!out.empty() && rec.features().size() != out.front().features.size()) {
      throw DataError("record " + rec.sample_id + " has feature length " +
                      std::to_string(rec.features().size()) + ", expected " +
                      std::to_string(out.front().features.size()));
    }
    out.push_back(Example{rec.features(), class_index(rec.label)});
  }
  return out;
}

SiteDataset pool_sites(const std::vector<SiteDataset>& sites) {
  std::vector<const SiteDataset*> sorted;
  for (const auto& s : sites) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const SiteDataset* a, const SiteDataset* b) { return a->site_id < b->site_id; });
  SiteDataset pooled;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) pooled.site_id += '+';
    pooled.site_id += sorted[i]->site_id;
  }
  for (const auto* s : sorted) {
    for (const auto& rec : s->records) {
      pooled.records.push_back(rec);
      pooled.records.back().site_id = pooled.site_id;
    }
  }
  return pooled;
}

}  // namespace fedhorizon
