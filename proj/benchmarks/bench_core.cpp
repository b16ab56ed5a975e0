#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "fedhorizon/codec.hpp"
#include "fedhorizon/federation.hpp"
#include "fedhorizon/image.hpp"
#include "fedhorizon/model.hpp"
#include "fedhorizon/random.hpp"

namespace fh = fedhorizon;

namespace {

fh::ParameterVector random_params(fh::Rng& rng, std::size_t n) {
  fh::ParameterVector p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = rng.normal();
  return p;
}

std::vector<fh::Example> random_examples(fh::Rng& rng, std::size_t n, std::size_t d) {
  std::vector<fh::Example> out(n);
  for (auto& ex : out) {
    ex.features.resize(d);
    for (auto& v : ex.features) v = rng.normal();
    ex.label = static_cast<std::size_t>(rng.below(4));
  }
  return out;
}

// Head used for the real feature length: 1280 features, 64 hidden units.
fh::ModelSpec head_spec() {
  fh::ModelSpec s;
  s.input_dim = 1280;
  s.hidden_dim = 64;
  return s;
}

}  // namespace

static void BM_Aggregate(benchmark::State& state) {
  fh::Rng rng(1);
  const auto parties = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = head_spec().parameter_count();
  std::vector<fh::RoundUpdate> updates;
  for (std::size_t k = 0; k < parties; ++k) {
    updates.push_back({"node" + std::to_string(k), random_params(rng, dim), 10 + k, 0});
  }
  for (auto _ : state) benchmark::DoNotOptimize(fh::aggregate(updates));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * parties * dim));
}
BENCHMARK(BM_Aggregate)->Arg(2)->Arg(8);

static void BM_Gradient(benchmark::State& state) {
  fh::Rng rng(2);
  const auto spec = head_spec();
  const auto params = random_params(rng, spec.parameter_count());
  const auto batch = random_examples(rng, static_cast<std::size_t>(state.range(0)), spec.input_dim);
  for (auto _ : state) benchmark::DoNotOptimize(fh::gradient(spec, params, batch, 1e-3));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch.size()));
}
BENCHMARK(BM_Gradient)->Arg(32)->Arg(300);

static void BM_TrainLocalEpoch(benchmark::State& state) {
  fh::Rng rng(3);
  const auto spec = head_spec();
  const auto params = fh::init_parameters(spec, 3);
  const auto data = random_examples(rng, 300, spec.input_dim);
  fh::Hyperparameters hyper;
  hyper.seed = 3;
  for (auto _ : state) benchmark::DoNotOptimize(fh::train_local(spec, params, data, hyper));
}
BENCHMARK(BM_TrainLocalEpoch)->Unit(benchmark::kMillisecond);

static void BM_EncodeLocalUpdate(benchmark::State& state) {
  fh::Rng rng(4);
  fh::Message msg;
  msg.node_id = "nih";
  msg.body = fh::LocalUpdateBody{300, random_params(rng, head_spec().parameter_count())};
  for (auto _ : state) benchmark::DoNotOptimize(fh::encode_message(msg));
}
BENCHMARK(BM_EncodeLocalUpdate);

static void BM_DecodeLocalUpdate(benchmark::State& state) {
  fh::Rng rng(5);
  fh::Message msg;
  msg.node_id = "nih";
  msg.body = fh::LocalUpdateBody{300, random_params(rng, head_spec().parameter_count())};
  const auto frame = fh::encode_message(msg);
  for (auto _ : state) benchmark::DoNotOptimize(fh::decode_message(frame));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * frame.size()));
}
BENCHMARK(BM_DecodeLocalUpdate);

static void BM_PreprocessAndGridpool(benchmark::State& state) {
  fh::Rng rng(6);
  fh::Image img(512, 512);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fh::gridpool_features(fh::preprocess(img), 4));
  }
}
BENCHMARK(BM_PreprocessAndGridpool)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
