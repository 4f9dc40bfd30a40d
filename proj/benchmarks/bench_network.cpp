#include <benchmark/benchmark.h>

#include "ntkfilter/finite_cnn.hpp"

namespace {

using namespace ntkf;

void BM_AutoencoderForward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const Geometry g{64, 64};
  const FiniteCnn net(autoencoder_arch(3), width, g, 1);
  const ImageTensor x = gaussian_noise_image(1, g, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_AutoencoderForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_AutoencoderVjp(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const Geometry g{64, 64};
  const FiniteCnn net(autoencoder_arch(3), width, g, 1);
  const ImageTensor x = gaussian_noise_image(1, g, 2);
  const ForwardCache cache = net.forward(x);
  const ImageTensor cot = gaussian_noise_image(1, g, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net.vjp(cache, cot));
}
BENCHMARK(BM_AutoencoderVjp)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_EmpiricalNtk(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const Geometry g{8, 8};
  const FiniteCnn net(vanilla_arch(3), width, g, 1);
  const ImageTensor x = gaussian_noise_image(1, g, 2);
  for (auto _ : state) benchmark::DoNotOptimize(empirical_ntk(net, x));
}
BENCHMARK(BM_EmpiricalNtk)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
