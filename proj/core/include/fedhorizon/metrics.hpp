#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fedhorizon {

/// K x K counts; rows are true classes, columns predicted classes. Class
/// arguments are 1-based throughout this header.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const noexcept { return k_; }
  std::uint64_t count(std::size_t true_class, std::size_t predicted_class) const;
  void add(std::size_t true_class, std::size_t predicted_class, std::uint64_t n = 1);

  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;
  std::uint64_t row_sum(std::size_t true_class) const;
  std::uint64_t column_sum(std::size_t predicted_class) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(std::size_t t, std::size_t p) const;

  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const int> true_labels,
                                 std::span<const int> predicted_labels, std::size_t num_classes);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Any 0/0 ratio evaluates to 0.
ClassScores precision_recall_f1(const ConfusionMatrix& cm, std::size_t cls);
/// Mean of F1 over all K classes, absent classes included.
double macro_f1(const ConfusionMatrix& cm);
/// trace / total; throws DataError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

/// Labels 1..4 collapse to 1 (control, negative) and 2 (any pathogenic group, positive).
ConfusionMatrix collapse_to_binary(std::span<const int> true_labels,
                                   std::span<const int> predicted_labels);

struct MetricsReport {
  ConfusionMatrix confusion{1};
  std::vector<ClassScores> per_class;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

MetricsReport make_report(const ConfusionMatrix& cm);

/// {confusion: [[...]], per_class: [{p, r, f1}], macro_f1, accuracy}
nlohmann::json to_json(const MetricsReport& report);
/// Aligned table with six decimals.
std::string to_text(const MetricsReport& report, std::span<const std::string> class_names = {});

}  // namespace fedhorizon
