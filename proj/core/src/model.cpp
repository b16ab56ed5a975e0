#include "fedhorizon/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "fedhorizon/error.hpp"
#include "fedhorizon/random.hpp"

namespace fedhorizon {

std::size_t ModelSpec::parameter_count() const {
  return (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_classes;
}

void ModelSpec::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || num_classes == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
}

void Hyperparameters::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (local_epochs == 0) throw ConfigError("local_epochs must be at least 1");
  if (!(reg_weight >= 0.0) || !std::isfinite(reg_weight)) {
    throw ConfigError("reg_weight must be nonnegative");
  }
}

bool ParameterVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ParameterVector::squared_norm() const noexcept {
  double sum = 0.0;
  for (const double v : values_) sum += v * v;
  return sum;
}

std::uint64_t ParameterVector::digest() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const double v : values_) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    std::byte le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xff);
    h = fnv1a64(le, h);
  }
  return h;
}

namespace {

template <typename T, typename P>
LayerView<T> make_layers(const ModelSpec& spec, P& params) {
  if (params.size() != spec.parameter_count()) {
    throw DataError("parameter vector has " + std::to_string(params.size()) +
                    " entries, model expects " + std::to_string(spec.parameter_count()));
  }
  auto all = params.values();
  const std::size_t n_w1 = spec.hidden_dim * spec.input_dim;
  const std::size_t n_w2 = spec.num_classes * spec.hidden_dim;
  LayerView<T> view;
  view.w1 = all.subspan(0, n_w1);
  view.b1 = all.subspan(n_w1, spec.hidden_dim);
  view.w2 = all.subspan(n_w1 + spec.hidden_dim, n_w2);
  view.b2 = all.subspan(n_w1 + spec.hidden_dim + n_w2, spec.num_classes);
  return view;
}

void softmax_in_place(std::span<double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : logits) v /= total;
}

void check_example(const ModelSpec& spec, const Example& ex) {
  if (ex.features.size() != spec.input_dim) {
    throw DataError("feature length " + std::to_string(ex.features.size()) +
                    " does not match model input_dim " + std::to_string(spec.input_dim));
  }
  if (ex.label >= spec.num_classes) {
    throw DataError("label index " + std::to_string(ex.label) + " out of range for " +
                    std::to_string(spec.num_classes) + " classes");
  }
}

// Per-example activations, reused across a batch.
struct Workspace {
  std::vector<double> pre_hidden;  // W1 x + b1
  std::vector<double> hidden;      // after ReLU and dropout
  std::vector<double> scale;       // dropout multiplier per hidden unit (0 or 1/(1-r))
  std::vector<double> probs;
  std::vector<double> d_hidden;

  explicit Workspace(const ModelSpec& spec)
      : pre_hidden(spec.hidden_dim),
        hidden(spec.hidden_dim),
        scale(spec.hidden_dim, 1.0),
        probs(spec.num_classes),
        d_hidden(spec.hidden_dim) {}
};

void draw_dropout(const ModelSpec& spec, Rng& rng, std::vector<double>& scale) {
  const double keep_scale = 1.0 / (1.0 - spec.dropout_rate);
  for (double& s : scale) s = rng.uniform01() < spec.dropout_rate ? 0.0 : keep_scale;
}

void run_forward(const ModelSpec& spec, const LayerView<const double>& net,
                 std::span<const double> x, Workspace& ws) {
  for (std::size_t j = 0; j < spec.hidden_dim; ++j) {
    double acc = net.b1[j];
    const double* row = net.w1.data() + j * spec.input_dim;
    for (std::size_t i = 0; i < spec.input_dim; ++i) acc += row[i] * x[i];
    ws.pre_hidden[j] = acc;
    ws.hidden[j] = (acc > 0.0 ? acc : 0.0) * ws.scale[j];
  }
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    double acc = net.b2[c];
    const double* row = net.w2.data() + c * spec.hidden_dim;
    for (std::size_t j = 0; j < spec.hidden_dim; ++j) acc += row[j] * ws.hidden[j];
    ws.probs[c] = acc;
  }
  softmax_in_place(ws.probs);
}

// Accumulates the unnormalized data-loss gradient of one example into grad.
void accumulate_backward(const ModelSpec& spec, const LayerView<const double>& net,
                         const Example& ex, Workspace& ws, LayerView<double>& grad) {
  // The floored loss is constant in the parameters below the floor.
  if (ws.probs[ex.label] < kProbabilityFloor) return;

  std::fill(ws.d_hidden.begin(), ws.d_hidden.end(), 0.0);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const double d_logit = ws.probs[c] - (c == ex.label ? 1.0 : 0.0);
    if (d_logit == 0.0) continue;
    grad.b2[c] += d_logit;
    double* grow = grad.w2.data() + c * spec.hidden_dim;
    const double* wrow = net.w2.data() + c * spec.hidden_dim;
    for (std::size_t j = 0; j < spec.hidden_dim; ++j) {
      grow[j] += d_logit * ws.hidden[j];
      ws.d_hidden[j] += d_logit * wrow[j];
    }
  }
  for (std::size_t j = 0; j < spec.hidden_dim; ++j) {
    if (ws.pre_hidden[j] <= 0.0 || ws.scale[j] == 0.0) continue;
    const double d_pre = ws.d_hidden[j] * ws.scale[j];
    grad.b1[j] += d_pre;
    double* grow = grad.w1.data() + j * spec.input_dim;
    for (std::size_t i = 0; i < spec.input_dim; ++i) grow[i] += d_pre * ex.features[i];
  }
}

// Data loss plus regularizer; an empty batch contributes zero data loss.
double objective(const ModelSpec& spec, const ParameterVector& params, Batch batch,
                 double reg_weight) {
  const auto net = layers(spec, params);
  Workspace ws(spec);
  double loss = 0.0;
  for (const Example& ex : batch) {
    check_example(spec, ex);
    run_forward(spec, net, ex.features, ws);
    loss -= std::log(std::max(ws.probs[ex.label], kProbabilityFloor));
  }
  if (!batch.empty()) loss /= static_cast<double>(batch.size());
  return loss + reg_weight * params.squared_norm();
}

// Gradient of the batch objective; with rng, dropout masks are drawn per example.
ParameterVector batch_gradient(const ModelSpec& spec, const ParameterVector& params,
                               std::span<const Example* const> batch, double reg_weight,
                               Rng* rng) {
  const auto net = layers(spec, params);
  ParameterVector grad(params.size());
  auto gview = layers(spec, grad);
  Workspace ws(spec);
  for (const Example* ex : batch) {
    if (rng != nullptr) draw_dropout(spec, *rng, ws.scale);
    run_forward(spec, net, ex->features, ws);
    accumulate_backward(spec, net, *ex, ws, gview);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double reg2 = 2.0 * reg_weight;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = grad[i] * inv_n + reg2 * params[i];
  return grad;
}

void require_batch(const ModelSpec& spec, Batch batch) {
  if (batch.empty()) throw DataError("batch is empty");
  for (const Example& ex : batch) check_example(spec, ex);
}

}  // namespace

LayerView<double> layers(const ModelSpec& spec, ParameterVector& params) {
  return make_layers<double>(spec, params);
}

LayerView<const double> layers(const ModelSpec& spec, const ParameterVector& params) {
  return make_layers<const double>(spec, params);
}

void check_parameters(const ModelSpec& spec, const ParameterVector& params) {
  if (params.size() != spec.parameter_count()) {
    throw DataError("parameter vector has " + std::to_string(params.size()) +
                    " entries, model expects " + std::to_string(spec.parameter_count()));
  }
  if (!params.all_finite()) throw DataError("parameter vector contains non-finite entries");
}

ParameterVector init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParameterVector params(spec.parameter_count());
  auto view = layers(spec, params);
  Rng rng(seed);
  const double bound1 = std::sqrt(6.0 / static_cast<double>(spec.input_dim + spec.hidden_dim));
  const double bound2 = std::sqrt(6.0 / static_cast<double>(spec.hidden_dim + spec.num_classes));
  for (double& w : view.w1) w = rng.uniform(-bound1, bound1);
  for (double& w : view.w2) w = rng.uniform(-bound2, bound2);
  return params;
}

std::vector<double> forward(const ModelSpec& spec, const ParameterVector& params,
                            std::span<const double> features,
                            std::optional<std::uint64_t> dropout_seed) {
  if (features.size() != spec.input_dim) {
    throw DataError("feature length " + std::to_string(features.size()) +
                    " does not match model input_dim " + std::to_string(spec.input_dim));
  }
  const auto net = layers(spec, params);
  Workspace ws(spec);
  if (dropout_seed && spec.dropout_rate > 0.0) {
    Rng rng(*dropout_seed);
    draw_dropout(spec, rng, ws.scale);
  }
  run_forward(spec, net, features, ws);
  return ws.probs;
}

std::size_t predict(const ModelSpec& spec, const ParameterVector& params,
                    std::span<const double> features) {
  const auto probs = forward(spec, params, features);
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double empirical_risk(const ModelSpec& spec, const ParameterVector& params, Batch batch,
                      double reg_weight) {
  require_batch(spec, batch);
  return objective(spec, params, batch, reg_weight);
}

ParameterVector gradient(const ModelSpec& spec, const ParameterVector& params, Batch batch,
                         double reg_weight) {
  require_batch(spec, batch);
  std::vector<const Example*> refs;
  refs.reserve(batch.size());
  for (const Example& ex : batch) refs.push_back(&ex);
  return batch_gradient(spec, params, refs, reg_weight, nullptr);
}

ParameterVector finite_difference_gradient(const ModelSpec& spec, const ParameterVector& params,
                                           Batch batch, double reg_weight, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
  ParameterVector probe = params;
  ParameterVector grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + eps;
    const double up = objective(spec, probe, batch, reg_weight);
    probe[i] = original - eps;
    const double down = objective(spec, probe, batch, reg_weight);
    probe[i] = original;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

ParameterVector train_local(const ModelSpec& spec, const ParameterVector& params,
                            std::span<const Example> dataset, const Hyperparameters& hyper) {
  spec.validate();
  hyper.validate();
  check_parameters(spec, params);
  require_batch(spec, dataset);

  Rng rng(hyper.seed);
  ParameterVector theta = params;
  std::vector<std::size_t> order(dataset.size());
  std::vector<const Example*> batch;
  batch.reserve(std::min(hyper.batch_size, dataset.size()));
  const bool use_dropout = spec.dropout_rate > 0.0;

  for (std::size_t epoch = 0; epoch < hyper.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      std::sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                order.begin() + static_cast<std::ptrdiff_t>(stop));
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&dataset[order[k]]);
      const auto grad =
          batch_gradient(spec, theta, batch, hyper.reg_weight, use_dropout ? &rng : nullptr);
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= hyper.learning_rate * grad[i];
    }
  }
  if (!theta.all_finite()) throw DataError("local training diverged to non-finite parameters");
  return theta;
}

}  // namespace fedhorizon
