#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "ntkfilter/kernel_maps.hpp"
#include "ntkfilter/ntk_engine.hpp"
#include "ntkfilter/nystrom.hpp"

namespace {

using namespace ntkf;

KernelMatrix random_covariance(int side) {
  const ImageTensor x = gaussian_noise_image(1, {side, side}, 7);
  return forward_covariance(vanilla_arch(3), x).after[0];
}

void BM_AMap(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const int r = static_cast<int>(state.range(1));
  const KernelMatrix s = random_covariance(side);
  for (auto _ : state) benchmark::DoNotOptimize(a_map(s, r, {side, side}));
  state.SetItemsProcessed(state.iterations() * s.dim() * s.dim() * r * r);
}
BENCHMARK(BM_AMap)->Args({16, 3})->Args({32, 3})->Args({32, 5});

void BM_VMapRelu(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const KernelMatrix s = random_covariance(side);
  for (auto _ : state) benchmark::DoNotOptimize(v_map_relu(s));
  state.SetItemsProcessed(state.iterations() * s.dim() * s.dim());
}
BENCHMARK(BM_VMapRelu)->Arg(16)->Arg(32);

void BM_NtkRecursionDeep(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const ImageTensor x = gaussian_noise_image(1, {side, side}, 3);
  const ArchSpec arch = deep_vanilla_arch(10, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ntk_unscaled(arch, x));
}
BENCHMARK(BM_NtkRecursionDeep)->Arg(16)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_KernelColumns(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const ImageTensor x = gaussian_noise_image(1, {side, side}, 4);
  const std::vector<int> idx = sample_columns(x.geometry(), 0.02, 1);
  const ArchSpec arch = vanilla_arch(11);
  for (auto _ : state) benchmark::DoNotOptimize(kernel_columns(arch, x, idx));
  state.counters["columns"] = static_cast<double>(idx.size());
}
BENCHMARK(BM_KernelColumns)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_NystromFactorize(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const ImageTensor x = gaussian_noise_image(1, {side, side}, 5);
  const std::vector<int> idx = sample_columns(x.geometry(), 0.02, 1);
  const Eigen::MatrixXd c = kernel_columns(vanilla_arch(11), x, idx);
  for (auto _ : state) benchmark::DoNotOptimize(nystrom_factorize(c, idx));
}
BENCHMARK(BM_NystromFactorize)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
