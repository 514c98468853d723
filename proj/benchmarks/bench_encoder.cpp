#include <benchmark/benchmark.h>

#include "mbbr/encoder.hpp"
#include "mbbr/pretrain.hpp"
#include "mbbr/rng.hpp"
#include "mbbr/synthetic.hpp"

using namespace mbbr;

namespace {

EncoderConfig paper_encoder() {
  return EncoderConfig{};  // 6 layers, 8 heads, 256 dim
}

Dataset bench_scenes(size_t n, uint64_t seed) {
  SynthConfig sc;
  sc.num_scenes = n;
  sc.min_entities = 4;
  sc.max_entities = 8;
  sc.seed = seed;
  return synthesize(sc);
}

void bm_encoder_forward(benchmark::State& state) {
  EncoderConfig cfg = paper_encoder();
  ad::ParamSet params;
  SplitRng rng(5);
  init_encoder_params(params, cfg, rng);
  const size_t entities = static_cast<size_t>(state.range(0));
  std::vector<double> feats(entities * cfg.model_dim);
  for (auto& v : feats) v = rng.normal();
  PaddedBatch batch{
      ad::Tensor::from_values({1, entities, cfg.model_dim}, std::move(feats)),
      std::vector<uint8_t>(entities, 1)};
  for (auto _ : state) {
    auto z = encode(params, cfg, batch);
    benchmark::DoNotOptimize(z.values().data());
  }
}
BENCHMARK(bm_encoder_forward)->Arg(4)->Arg(8)->Arg(16);

void bm_pretrain_epoch(benchmark::State& state) {
  PretrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.encoder.num_layers = 2;
  cfg.encoder.num_heads = 4;
  cfg.encoder.model_dim = 64;
  cfg.encoder.ffn_dim = 128;
  Dataset scenes = bench_scenes(static_cast<size_t>(state.range(0)), 7);
  auto examples = strip_for_pretraining(scenes);
  for (auto _ : state) {
    ad::ParamSet params;
    SplitRng rng(9);
    init_pretrain_params(params, cfg, count_categories(scenes), rng);
    auto result = pretrain(examples, cfg, params);
    benchmark::DoNotOptimize(result.epoch_losses.data());
  }
}
BENCHMARK(bm_pretrain_epoch)->Unit(benchmark::kMillisecond)->Arg(32)->Arg(64);

}  // namespace
