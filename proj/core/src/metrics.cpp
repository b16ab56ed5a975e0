#include "fedhorizon/metrics.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

#include "fedhorizon/error.hpp"

namespace fedhorizon {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

std::size_t ConfusionMatrix::index(std::size_t t, std::size_t p) const {
  if (t < 1 || t > k_ || p < 1 || p > k_) {
    throw DataError("class index out of range 1.." + std::to_string(k_));
  }
  return (t - 1) * k_ + (p - 1);
}

std::uint64_t ConfusionMatrix::count(std::size_t t, std::size_t p) const {
  return counts_[index(t, p)];
}

void ConfusionMatrix::add(std::size_t t, std::size_t p, std::uint64_t n) {
  counts_[index(t, p)] += n;
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < k_; ++c) t += counts_[c * k_ + c];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t t) const {
  std::uint64_t s = 0;
  for (std::size_t p = 1; p <= k_; ++p) s += count(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t p) const {
  std::uint64_t s = 0;
  for (std::size_t t = 1; t <= k_; ++t) s += count(t, p);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const int> true_labels,
                                 std::span<const int> predicted_labels, std::size_t num_classes) {
  if (true_labels.size() != predicted_labels.size()) {
    throw DataError("label streams differ in length: " + std::to_string(true_labels.size()) +
                    " vs " + std::to_string(predicted_labels.size()));
  }
  ConfusionMatrix cm(num_classes);
  const auto k = static_cast<int>(num_classes);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int t = true_labels[i];
    const int p = predicted_labels[i];
    if (t < 1 || t > k || p < 1 || p > k) {
      throw DataError("label at position " + std::to_string(i) + " outside 1.." +
                      std::to_string(k));
    }
    cm.add(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

namespace {
double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace

ClassScores precision_recall_f1(const ConfusionMatrix& cm, std::size_t cls) {
  const auto tp = static_cast<double>(cm.count(cls, cls));
  const auto fp = static_cast<double>(cm.column_sum(cls)) - tp;
  const auto fn = static_cast<double>(cm.row_sum(cls)) - tp;
  ClassScores s;
  s.precision = ratio(tp, tp + fp);
  s.recall = ratio(tp, tp + fn);
  s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
  return s;
}

double macro_f1(const ConfusionMatrix& cm) {
  double sum = 0.0;
  for (std::size_t c = 1; c <= cm.num_classes(); ++c) sum += precision_recall_f1(cm, c).f1;
  return sum / static_cast<double>(cm.num_classes());
}

double accuracy(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) throw DataError("accuracy of an empty confusion matrix is undefined");
  return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

ConfusionMatrix collapse_to_binary(std::span<const int> true_labels,
                                   std::span<const int> predicted_labels) {
  if (true_labels.size() != predicted_labels.size()) {
    throw DataError("label streams differ in length");
  }
  auto collapse = [](int label, std::size_t pos) -> std::size_t {
    if (label < 1 || label > 4) {
      throw DataError("label at position " + std::to_string(pos) + " outside 1..4");
    }
    return label == 1 ? 1 : 2;
  };
  ConfusionMatrix cm(2);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    cm.add(collapse(true_labels[i], i), collapse(predicted_labels[i], i));
  }
  return cm;
}

MetricsReport make_report(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.confusion = cm;
  for (std::size_t c = 1; c <= cm.num_classes(); ++c) r.per_class.push_back(precision_recall_f1(cm, c));
  r.macro_f1 = macro_f1(cm);
  r.accuracy = cm.total() == 0 ? 0.0 : accuracy(cm);
  return r;
}

nlohmann::json to_json(const MetricsReport& report) {
  const auto k = report.confusion.num_classes();
  nlohmann::json confusion = nlohmann::json::array();
  for (std::size_t t = 1; t <= k; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 1; p <= k; ++p) row.push_back(report.confusion.count(t, p));
    confusion.push_back(std::move(row));
  }
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& s : report.per_class) {
    per_class.push_back({{"p", s.precision}, {"r", s.recall}, {"f1", s.f1}});
  }
  return {{"confusion", confusion},
          {"per_class", per_class},
          {"macro_f1", report.macro_f1},
          {"accuracy", report.accuracy}};
}

std::string to_text(const MetricsReport& report, std::span<const std::string> class_names) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  const auto k = report.confusion.num_classes();
  auto name = [&](std::size_t c) {
    return c - 1 < class_names.size() ? class_names[c - 1] : "class " + std::to_string(c);
  };
  std::size_t width = 8;
  for (std::size_t c = 1; c <= k; ++c) width = std::max(width, name(c).size());

  out << std::left << std::setw(static_cast<int>(width)) << "true\\pred";
  for (std::size_t p = 1; p <= k; ++p) out << std::right << std::setw(8) << p;
  out << '\n';
  for (std::size_t t = 1; t <= k; ++t) {
    out << std::left << std::setw(static_cast<int>(width)) << name(t);
    for (std::size_t p = 1; p <= k; ++p) out << std::right << std::setw(8) << report.confusion.count(t, p);
    out << '\n';
  }
  out << '\n'
      << std::left << std::setw(static_cast<int>(width)) << "class" << std::right
      << std::setw(12) << "precision" << std::setw(12) << "recall" << std::setw(12) << "f1" << '\n';
  for (std::size_t c = 1; c <= k; ++c) {
    const auto& s = report.per_class[c - 1];
    out << std::left << std::setw(static_cast<int>(width)) << name(c) << std::right
        << std::setw(12) << s.precision << std::setw(12) << s.recall << std::setw(12) << s.f1
        << '\n';
  }
  out << '\n' << "macro_f1  " << report.macro_f1 << '\n' << "accuracy  " << report.accuracy << '\n';
  return out.str();
}

}  // namespace fedhorizon
