#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fedhorizon {

/// Shape of the two-layer classifier head:
///   features[d] -> dense(hidden) -> ReLU -> dropout -> dense(K) -> softmax.
struct ModelSpec {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t num_classes = 4;
  double dropout_rate = 0.2;

  /// (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_classes
  std::size_t parameter_count() const;
  /// Throws ConfigError when a dimension is zero or dropout_rate is outside [0, 1).
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Flat trainable parameters of a ModelSpec, in this fixed layout:
///   W1  hidden_dim x input_dim, row-major (row j holds the weights of hidden unit j)
///   b1  hidden_dim
///   W2  num_classes x hidden_dim, row-major
///   b2  num_classes
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::size_t count) : values_(count, 0.0) {}
  explicit ParameterVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vector() const noexcept { return values_; }

  bool all_finite() const noexcept;
  double squared_norm() const noexcept;
  /// FNV-1a over the little-endian binary64 encoding of every entry.
  std::uint64_t digest() const noexcept;

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::vector<double> values_;
};

/// Views into the four blocks of a ParameterVector.
template <typename T>
struct LayerView {
  std::span<T> w1, b1, w2, b2;
};
LayerView<double> layers(const ModelSpec& spec, ParameterVector& params);
LayerView<const double> layers(const ModelSpec& spec, const ParameterVector& params);

struct Hyperparameters {
  double learning_rate = 0.05;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  double reg_weight = 0.0;  // coefficient on the squared L2 norm of all parameters
  std::uint64_t seed = 0;

  /// learning_rate must be positive and finite; batch_size and local_epochs at least 1.
  void validate() const;
};

/// One training or evaluation example. The class index is 0-based.
struct Example {
  std::vector<double> features;
  std::size_t label = 0;
};

using Batch = std::span<const Example>;

/// Scaled-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
/// Draw order follows the parameter layout.
ParameterVector init_parameters(const ModelSpec& spec, std::uint64_t seed);

/// Class probabilities. With a dropout seed, hidden activations are dropped
/// with probability spec.dropout_rate and survivors scaled by 1 / (1 - rate).
std::vector<double> forward(const ModelSpec& spec, const ParameterVector& params,
                            std::span<const double> features,
                            std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// Index of the largest probability, dropout disabled. Ties go to the lower index.
std::size_t predict(const ModelSpec& spec, const ParameterVector& params,
                    std::span<const double> features);

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean cross-entropy (natural log, probabilities floored at 1e-12) over the
/// batch plus reg_weight * ||params||^2. Dropout disabled.
double empirical_risk(const ModelSpec& spec, const ParameterVector& params, Batch batch,
                      double reg_weight);

/// Analytic gradient of empirical_risk.
ParameterVector gradient(const ModelSpec& spec, const ParameterVector& params, Batch batch,
                         double reg_weight);

/// Central differences of empirical_risk, one coordinate at a time. An empty
/// batch is accepted here and probes the regularizer alone.
ParameterVector finite_difference_gradient(const ModelSpec& spec, const ParameterVector& params,
                                           Batch batch, double reg_weight, double eps);

/// Mini-batch SGD for hyper.local_epochs epochs.
///
/// One Rng(hyper.seed) drives the whole call. Each epoch shuffles the index
/// permutation 0..n-1 (Rng::shuffle), then cuts it into consecutive batches of
/// hyper.batch_size; the last batch may be short. Within a batch, examples are
/// visited in ascending dataset index so a full batch sums exactly like
/// gradient(). Each step is params -= learning_rate * g with g the gradient of
/// the batch objective at hyper.reg_weight. When spec.dropout_rate > 0, each
/// example's mask (hidden_dim uniform01 draws, unit dropped when the draw is
/// below the rate) is drawn right before its forward pass.
ParameterVector train_local(const ModelSpec& spec, const ParameterVector& params,
                            std::span<const Example> dataset, const Hyperparameters& hyper);

/// Throws DataError unless params has spec.parameter_count() finite entries.
void check_parameters(const ModelSpec& spec, const ParameterVector& params);

}  // namespace fedhorizon
