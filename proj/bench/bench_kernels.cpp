// Parallel kernels against the serial reference on backbone-sized layers.

#include <benchmark/benchmark.h>

#include <vector>

#include "siamreid/backbone.hpp"
#include "siamreid/kernels.hpp"
#include "siamreid/rng.hpp"

namespace k = siamreid::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  siamreid::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

// Stem of the micro network on a batch of 8 images.
k::ConvGeometry stem() { return k::ConvGeometry::make(8, 3, 160, 80, 16, 3, 3, 2, 1); }
// Expanded depthwise layer of the second stage.
k::ConvGeometry depthwise() { return k::ConvGeometry::make(8, 96, 40, 20, 96, 3, 3, 1, 1); }
// Pointwise projection.
k::ConvGeometry pointwise() { return k::ConvGeometry::make(8, 96, 40, 20, 24, 1, 1, 1, 0); }

void BM_DenseForward(benchmark::State& state, k::ConvGeometry g, bool reference) {
  const auto x = random_vec(g.batch * g.in_channels * g.in_h * g.in_w, 1);
  const auto w = random_vec(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w, 2);
  const auto b = random_vec(g.out_channels, 3);
  std::vector<float> y(g.batch * g.out_channels * g.out_plane());
  for (auto _ : state) {
    if (reference) k::reference::conv2d_forward<float>(g, x, w, b, y);
    else k::conv2d_forward<float>(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_DenseBackwardWeight(benchmark::State& state, k::ConvGeometry g, bool reference) {
  const auto x = random_vec(g.batch * g.in_channels * g.in_h * g.in_w, 1);
  const auto dy = random_vec(g.batch * g.out_channels * g.out_plane(), 4);
  std::vector<float> dw(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w), db(g.out_channels);
  for (auto _ : state) {
    if (reference) k::reference::conv2d_backward_weight<float>(g, x, dy, dw, db);
    else k::conv2d_backward_weight<float>(g, x, dy, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}

void BM_DepthwiseForward(benchmark::State& state, k::ConvGeometry g, bool reference) {
  const auto x = random_vec(g.batch * g.in_channels * g.in_h * g.in_w, 1);
  const auto w = random_vec(g.in_channels * g.kernel_h * g.kernel_w, 2);
  std::vector<float> y(g.batch * g.out_channels * g.out_plane());
  for (auto _ : state) {
    if (reference) k::reference::depthwise_forward<float>(g, x, w, y);
    else k::depthwise_forward<float>(g, x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_DepthwiseBackwardInput(benchmark::State& state, k::ConvGeometry g, bool reference) {
  const auto dy = random_vec(g.batch * g.out_channels * g.out_plane(), 1);
  const auto w = random_vec(g.in_channels * g.kernel_h * g.kernel_w, 2);
  std::vector<float> dx(g.batch * g.in_channels * g.in_h * g.in_w);
  for (auto _ : state) {
    if (reference) k::reference::depthwise_backward_input<float>(g, dy, w, dx);
    else k::depthwise_backward_input<float>(g, dy, w, dx);
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_Descriptors(benchmark::State& state) {
  const auto net = siamreid::BackboneConfig::micro();
  const auto model = siamreid::build_model(net, 0);
  siamreid::Tensor<float> x({8, 3, 160, 80});
  siamreid::Rng rng(5);
  for (float& v : x.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto _ : state) benchmark::DoNotOptimize(siamreid::extract_descriptors(model, net, x));
  state.SetItemsProcessed(state.iterations() * 8);
}

}  // namespace

BENCHMARK_CAPTURE(BM_DenseForward, stem_reference, stem(), true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DenseForward, stem_parallel, stem(), false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DenseForward, pointwise_reference, pointwise(), true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DenseForward, pointwise_parallel, pointwise(), false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DenseBackwardWeight, pointwise_reference, pointwise(), true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DenseBackwardWeight, pointwise_parallel, pointwise(), false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DepthwiseForward, reference, depthwise(), true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DepthwiseForward, parallel, depthwise(), false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DepthwiseBackwardInput, reference, depthwise(), true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_DepthwiseBackwardInput, parallel, depthwise(), false)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Descriptors)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
