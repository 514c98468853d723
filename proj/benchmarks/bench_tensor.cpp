#include <benchmark/benchmark.h>

#include "mbbr/ops.hpp"
#include "mbbr/rng.hpp"
#include "mbbr/tensor.hpp"

using namespace mbbr;

namespace {

ad::Tensor random_matrix(size_t rows, size_t cols, SplitRng& rng, bool grad) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal();
  return ad::Tensor::from_values({rows, cols}, std::move(v), grad);
}

void bm_matmul(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  SplitRng rng(1);
  auto a = random_matrix(n, n, rng, false);
  auto b = random_matrix(n, n, rng, false);
  for (auto _ : state) {
    auto c = ad::matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

void bm_matmul_backward(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  SplitRng rng(1);
  for (auto _ : state) {
    auto a = random_matrix(n, n, rng, true);
    auto b = random_matrix(n, n, rng, true);
    ad::Tape tape;
    auto loss = ad::sum_all(ad::matmul(a, b));
    tape.backward(loss);
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(bm_matmul_backward)->Arg(64)->Arg(128);

void bm_softmax(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  SplitRng rng(2);
  auto x = random_matrix(n, n, rng, false);
  for (auto _ : state) {
    auto y = ad::softmax(x);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(bm_softmax)->Arg(128)->Arg(512);

void bm_layer_norm(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  SplitRng rng(3);
  auto x = random_matrix(n, 256, rng, false);
  auto gain = ad::Tensor::full({256}, 1.0);
  auto bias = ad::Tensor::zeros({256});
  for (auto _ : state) {
    auto y = ad::layer_norm(x, gain, bias);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(bm_layer_norm)->Arg(64)->Arg(256);

}  // namespace
