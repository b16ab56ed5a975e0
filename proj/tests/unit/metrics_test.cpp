#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fedhorizon/error.hpp"
#include "fedhorizon/metrics.hpp"
#include "support.hpp"

namespace fh = fedhorizon;

namespace {

struct Oracle {
  std::vector<double> p, r, f1;
  double macro = 0.0;
  double acc = 0.0;
};

// Straight from the label streams, no confusion matrix involved.
Oracle brute_force(const std::vector<int>& t, const std::vector<int>& y, int k) {
  Oracle o;
  for (int c = 1; c <= k; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == c && y[i] == c) ++tp;
      if (t[i] != c && y[i] == c) ++fp;
      if (t[i] == c && y[i] != c) ++fn;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    o.p.push_back(p);
    o.r.push_back(r);
    o.f1.push_back(f);
    o.macro += f / k;
  }
  double hits = 0;
  for (std::size_t i = 0; i < t.size(); ++i) hits += t[i] == y[i] ? 1 : 0;
  o.acc = hits / static_cast<double>(t.size());
  return o;
}

std::pair<std::vector<int>, std::vector<int>> random_stream(fh::Rng& rng, std::size_t n, int k,
                                                            bool drop_class) {
  std::vector<int> t(n), y(n);
  const int missing = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  for (std::size_t i = 0; i < n; ++i) {
    do {
      t[i] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    } while (drop_class && k > 1 && t[i] == missing);
    y[i] = rng.below(3) == 0 ? t[i] : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
  }
  return {t, y};
}

}  // namespace

TEST(ConfusionMatrix, PerfectPredictionsAreDiagonal) {
  const std::vector<int> t{1, 2, 3, 4, 4, 2};
  const auto cm = fh::confusion_matrix(t, t, 4);
  for (std::size_t a = 1; a <= 4; ++a) {
    for (std::size_t b = 1; b <= 4; ++b) {
      if (a != b) EXPECT_EQ(cm.count(a, b), 0u);
    }
  }
  EXPECT_EQ(cm.trace(), 6u);
}

TEST(ConfusionMatrix, CellsMatchDoubleLoopCount) {
  fh::Rng rng(1);
  const auto [t, y] = random_stream(rng, 200, 4, false);
  const auto cm = fh::confusion_matrix(t, y, 4);
  EXPECT_EQ(cm.total(), 200u);
  for (int a = 1; a <= 4; ++a) {
    std::uint64_t row = 0;
    for (int b = 1; b <= 4; ++b) {
      std::uint64_t n = 0;
      for (std::size_t i = 0; i < t.size(); ++i) n += (t[i] == a && y[i] == b) ? 1 : 0;
      EXPECT_EQ(cm.count(a, b), n);
      row += n;
    }
    EXPECT_EQ(cm.row_sum(a), row);
    EXPECT_EQ(cm.row_sum(a), static_cast<std::uint64_t>(std::count(t.begin(), t.end(), a)));
  }
}

TEST(ConfusionMatrix, Errors) {
  const std::vector<int> a{1, 2}, b{1};
  EXPECT_THROW(fh::confusion_matrix(a, b, 4), fh::DataError);
  const std::vector<int> bad{1, 5};
  EXPECT_THROW(fh::confusion_matrix(bad, a, 4), fh::DataError);
  EXPECT_THROW(fh::confusion_matrix(a, std::vector<int>{0, 1}, 4), fh::DataError);
}

TEST(PrecisionRecallF1, PerfectClass) {
  fh::ConfusionMatrix cm(4);
  cm.add(2, 2, 5);
  const auto s = fh::precision_recall_f1(cm, 2);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 1.0);
  EXPECT_EQ(s.f1, 1.0);
}

TEST(PrecisionRecallF1, AbsentClassIsZero) {
  fh::ConfusionMatrix cm(4);
  cm.add(1, 1, 3);
  const auto s = fh::precision_recall_f1(cm, 3);
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_EQ(s.recall, 0.0);
  EXPECT_EQ(s.f1, 0.0);
}

TEST(MacroF1, Examples) {
  fh::ConfusionMatrix perfect(4);
  for (std::size_t c = 1; c <= 4; ++c) perfect.add(c, c, c);
  EXPECT_EQ(fh::macro_f1(perfect), 1.0);
  fh::ConfusionMatrix half(2);
  half.add(1, 1, 4);  // class 2 never appears: F1 = (1, 0)
  EXPECT_EQ(fh::macro_f1(half), 0.5);
}

TEST(Accuracy, EighteenOfTwentyFour) {
  fh::ConfusionMatrix cm(4);
  cm.add(1, 1, 5);
  cm.add(2, 2, 4);
  cm.add(3, 3, 6);
  cm.add(4, 4, 3);
  cm.add(1, 2, 2);
  cm.add(3, 4, 4);
  ASSERT_EQ(cm.trace(), 18u);
  ASSERT_EQ(cm.total(), 24u);
  EXPECT_EQ(fh::accuracy(cm), 0.75);
}

TEST(Accuracy, EmptyMatrixThrows) {
  EXPECT_THROW(fh::accuracy(fh::ConfusionMatrix(4)), fh::DataError);
}

TEST(Metrics, MatchBruteForceOnRandomStreams) {
  fh::Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 1 + rng.below(500);
    const auto [t, y] = random_stream(rng, n, 4, trial % 3 == 0);
    const auto report = fh::make_report(fh::confusion_matrix(t, y, 4));
    const auto o = brute_force(t, y, 4);
    for (std::size_t c = 0; c < 4; ++c) {
      ASSERT_NEAR(report.per_class[c].precision, o.p[c], 1e-12);
      ASSERT_NEAR(report.per_class[c].recall, o.r[c], 1e-12);
      ASSERT_NEAR(report.per_class[c].f1, o.f1[c], 1e-12);
      // F1 vanishes exactly when there are no true positives.
      ASSERT_EQ(report.per_class[c].f1 == 0.0, report.confusion.count(c + 1, c + 1) == 0);
    }
    ASSERT_NEAR(report.macro_f1, o.macro, 1e-12);
    ASSERT_NEAR(report.accuracy, o.acc, 1e-12);
    ASSERT_GE(report.macro_f1, 0.0);
    ASSERT_LE(report.macro_f1, 1.0);
  }
}

TEST(Accuracy, InvariantUnderClassRelabelling) {
  fh::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto [t, y] = random_stream(rng, 1 + rng.below(100), 4, false);
    std::vector<int> perm{1, 2, 3, 4};
    rng.shuffle(std::span(perm));
    const double before = fh::accuracy(fh::confusion_matrix(t, y, 4));
    for (auto& v : t) v = perm[v - 1];
    for (auto& v : y) v = perm[v - 1];
    ASSERT_EQ(fh::accuracy(fh::confusion_matrix(t, y, 4)), before);
  }
}

TEST(CollapseToBinary, CrossSubtypeCountsAsCorrectPositive) {
  const std::vector<int> t{2}, y{4};
  const auto cm = fh::collapse_to_binary(t, y);
  EXPECT_EQ(cm.num_classes(), 2u);
  EXPECT_EQ(cm.count(2, 2), 1u);
}

TEST(CollapseToBinary, AllControl) {
  const std::vector<int> t(6, 1);
  const auto cm = fh::collapse_to_binary(t, t);
  EXPECT_EQ(cm.count(1, 1), 6u);
  EXPECT_EQ(cm.count(1, 2) + cm.count(2, 1) + cm.count(2, 2), 0u);
}

TEST(CollapseToBinary, NeverLowersAccuracy) {
  fh::Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const auto [t, y] = random_stream(rng, 1 + rng.below(300), 4, false);
    const auto four = fh::accuracy(fh::confusion_matrix(t, y, 4));
    const auto two = fh::accuracy(fh::collapse_to_binary(t, y));
    ASSERT_GE(two, four);
    // Case-by-case: every 4-class hit is a binary hit.
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == y[i]) ASSERT_EQ(t[i] == 1, y[i] == 1);
    }
  }
  const std::vector<int> bad{5};
  EXPECT_THROW(fh::collapse_to_binary(bad, bad), fh::DataError);
}

TEST(Report, JsonAndTextAgreeToSixDecimals) {
  fh::Rng rng(5);
  const auto [t, y] = random_stream(rng, 77, 4, true);
  const auto report = fh::make_report(fh::confusion_matrix(t, y, 4));
  const auto doc = fh::to_json(report);
  EXPECT_EQ(doc["confusion"].size(), 4u);
  EXPECT_EQ(doc["per_class"].size(), 4u);
  EXPECT_EQ(doc["macro_f1"].get<double>(), report.macro_f1);
  EXPECT_EQ(doc["per_class"][1]["f1"].get<double>(), report.per_class[1].f1);
  const auto text = fh::to_text(report);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", doc["macro_f1"].get<double>());
  EXPECT_NE(text.find(buf), std::string::npos) << text;
  std::snprintf(buf, sizeof(buf), "%.6f", doc["accuracy"].get<double>());
  EXPECT_NE(text.find(buf), std::string::npos) << text;
  for (int c = 0; c < 4; ++c) {
    std::snprintf(buf, sizeof(buf), "%.6f", doc["per_class"][c]["p"].get<double>());
    EXPECT_NE(text.find(buf), std::string::npos) << text;
  }
}
