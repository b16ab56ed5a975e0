#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedhorizon/image.hpp"
#include "fedhorizon/model.hpp"

namespace fedhorizon {

/// Class labels as they appear in manifests (1-based).
enum class Mechanism : std::uint8_t {
  control = 1,
  glycine_substitution = 2,
  pseudoexon_insertion = 3,
  exon_skipping = 4,
};

inline constexpr std::size_t kNumMechanisms = 4;

std::string_view mechanism_name(Mechanism m);
/// Throws DataError unless 1 <= label <= 4.
Mechanism mechanism_from_label(int label);
inline std::size_t class_index(Mechanism m) { return static_cast<std::size_t>(m) - 1; }
inline int label_value(Mechanism m) { return static_cast<int>(m); }

using FeatureVector = std::vector<double>;

struct SampleRecord {
  std::string sample_id;
  std::string patient_id;
  std::string site_id;
  Mechanism label = Mechanism::control;
  std::variant<Image, FeatureVector> payload;

  bool has_features() const { return std::holds_alternative<FeatureVector>(payload); }
  const FeatureVector& features() const { return std::get<FeatureVector>(payload); }
  const Image& image() const { return std::get<Image>(payload); }

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct SiteDataset {
  std::string site_id;
  std::vector<SampleRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  std::set<std::string> patient_ids() const;
  /// Per-class record counts, indexed by class_index.
  std::vector<std::size_t> class_counts() const;
  /// Throws DataError if any record carries another site_id.
  void validate() const;
};

/// Feature file: "fedhorizon-features v1 <d>" then d comma-separated reals on one line.
FeatureVector load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const FeatureVector& features);

/// Manifest CSV with header `sample_id,patient_id,site_id,label,kind,path`.
/// Paths are resolved relative to the manifest's directory. Every row must
/// carry the same site_id; an empty manifest takes its site id from the file
/// stem.
SiteDataset load_manifest(const std::filesystem::path& path);

/// Writes the manifest plus one payload file per record under
/// `<manifest dir>/<payload_dir>/`: `<sample_id>.feat` or `<sample_id>.ppm`.
void save_manifest(const std::filesystem::path& path, const SiteDataset& dataset,
                   const std::string& payload_dir = "payload");

/// Either an explicit patient list or a seeded fraction of patients.
struct SplitPlan {
  std::optional<std::set<std::string>> test_patient_ids;
  double test_fraction = 0.0;
  std::uint64_t seed = 0;

  static SplitPlan explicit_ids(std::set<std::string> ids) {
    SplitPlan p;
    p.test_patient_ids = std::move(ids);
    return p;
  }
  static SplitPlan fraction(double f, std::uint64_t seed) {
    SplitPlan p;
    p.test_fraction = f;
    p.seed = seed;
    return p;
  }
};

struct SplitResult {
  SiteDataset train;
  SiteDataset test;
};

/// Sends each patient's records wholly to one side, keeping record order.
/// With a fraction, patients are sorted by id, shuffled with Rng(seed), and
/// the first round(fraction * #patients) go to test.
SplitResult patient_level_split(const SiteDataset& dataset, const SplitPlan& plan);

/// Picks whole patients totalling exactly `target` records, aiming for an
/// even class spread (target / 4 per class, remainder to the lower labels).
/// Per-class record totals are chosen to sum to `target` with the smallest
/// total deviation from those quotas; within a class, patients are taken
/// earliest first in Rng(seed) order. Throws DataError when no patient subset
/// totals `target`.
std::set<std::string> select_holdout_patients(const SiteDataset& dataset, std::size_t target,
                                              std::uint64_t seed);

/// Gaussian class clusters shared by every site. Class c has mean
/// (separation / sqrt 2) * e_(c mod d), so distinct classes sit `separation`
/// apart whenever feature_dim >= 4; each coordinate has unit variance.
/// Records are generated class by class in label order; within a class,
/// patients hold 2-4 consecutive records (size uniform on {2,3,4}, the last
/// patient of a class takes whatever remains). Ids: `<site>-s<nnnnn>` and
/// `<site>-p<nnnn>`.
struct SynthSite {
  std::string site_id;
  std::vector<std::size_t> class_counts;  // per class, label order
};
std::vector<SiteDataset> synthesize_dataset(const std::vector<SynthSite>& sites,
                                            std::size_t feature_dim, double class_separation,
                                            std::uint64_t seed);
std::vector<std::vector<double>> synthetic_class_means(std::size_t feature_dim,
                                                       double class_separation);

/// Applies the augmentation policy to every image record. Variants keep
/// patient, site, and label; their ids are `<sample_id>~r<deg>[f]b<factor>`.
/// Feature records pass through untouched.
SiteDataset augment_dataset(const SiteDataset& dataset, const AugmentationPolicy& policy);

struct ExtractorChoice {
  std::string id = "gridpool";
  nlohmann::json config = nlohmann::json::object();
};

/// Turns image records into feature records (preprocess, then the extractor).
SiteDataset featurize(const SiteDataset& dataset, const ExtractorChoice& extractor);

/// Training view: every record must carry features of one common length.
std::vector<Example> to_examples(const SiteDataset& dataset);

/// Concatenation in ascending site_id order; records are relabelled with the
/// pooled id, which joins the sorted site ids with '+'.
SiteDataset pool_sites(const std::vector<SiteDataset>& sites);

}  // namespace fedhorizon
