#include <benchmark/benchmark.h>

#include "mbbr/eval.hpp"
#include "mbbr/rng.hpp"
#include "mbbr/synthetic.hpp"

using namespace mbbr;

namespace {

void bm_recall_at(benchmark::State& state) {
  const size_t scenes = static_cast<size_t>(state.range(0));
  SynthConfig sc;
  sc.num_scenes = scenes;
  sc.min_entities = 4;
  sc.max_entities = 8;
  sc.seed = 3;
  Dataset data = synthesize(sc);

  SplitRng rng(11);
  std::vector<std::vector<PairPrediction>> preds(data.size());
  size_t total = 0;
  for (size_t s = 0; s < data.size(); ++s) {
    const auto& scene = data[s];
    for (size_t i = 0; i < scene.entities.size(); ++i)
      for (size_t j = 0; j < scene.entities.size(); ++j) {
        if (i == j) continue;
        PairPrediction p;
        p.scene_id = scene.scene_id;
        p.subject = i;
        p.object = j;
        p.scores.resize(sc.num_predicates);
        for (auto& v : p.scores) v = rng.uniform();
        preds[s].push_back(std::move(p));
        ++total;
      }
  }

  RecallConfig cfg;
  cfg.k = 1;
  cfg.top_n = 20;
  for (auto _ : state) {
    double r = recall_at(preds, data, cfg);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(total));
}
BENCHMARK(bm_recall_at)->Arg(100)->Arg(500);

void bm_synthesize(benchmark::State& state) {
  SynthConfig sc;
  sc.num_scenes = static_cast<size_t>(state.range(0));
  sc.min_entities = 4;
  sc.max_entities = 8;
  for (auto _ : state) {
    Dataset d = synthesize(sc);
    benchmark::DoNotOptimize(d.data());
  }
}
BENCHMARK(bm_synthesize)->Unit(benchmark::kMillisecond)->Arg(100)->Arg(500);

}  // namespace
