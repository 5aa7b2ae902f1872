// Parallel (im2col + GEMM, OpenMP) kernels against the serial reference
// loops on the layer shapes of the default 64×64 model.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "vd/kernels.hpp"

namespace {

using vd::kernels::ConvGeometry;

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(gen);
  return v;
}

// {in_c, in_h, in_w, out_c, k, stride, pad}
const ConvGeometry kShapes[] = {
    {32, 64, 64, 16, 3, 2, 1},  // depth stem
    {16, 32, 32, 32, 3, 2, 1},  // stage 1
    {64, 8, 8, 128, 3, 2, 1},   // stage 3
    {8, 64, 64, 4, 3, 1, 1},    // full-resolution head
    {35, 64, 64, 8, 1, 1, 0},   // full-resolution lateral
};

struct ConvBuffers {
  ConvGeometry g;
  std::vector<double> input, kernel, out, grad_out, grad_in, grad_kernel;

  explicit ConvBuffers(const ConvGeometry& geo)
      : g(geo),
        input(random_buffer(static_cast<std::size_t>(geo.in_c) * geo.in_h * geo.in_w, 1)),
        kernel(random_buffer(static_cast<std::size_t>(geo.out_c) * geo.patch(), 2)),
        out(static_cast<std::size_t>(geo.out_c) * geo.out_h() * geo.out_w()),
        grad_out(random_buffer(out.size(), 3)),
        grad_in(input.size()),
        grad_kernel(kernel.size()) {}
};

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvBuffers b(kShapes[state.range(0)]);
  for (auto _ : state) {
    if constexpr (Parallel)
      vd::kernels::conv2d_forward(b.g, b.input, b.kernel, b.out);
    else
      vd::kernels::reference::conv2d_forward(b.g, b.input, b.kernel, b.out);
    benchmark::DoNotOptimize(b.out.data());
  }
  state.counters["MACs"] = benchmark::Counter(
      static_cast<double>(b.out.size()) * b.g.patch(), benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  ConvBuffers b(kShapes[state.range(0)]);
  for (auto _ : state) {
    if constexpr (Parallel) {
      vd::kernels::conv2d_backward_input(b.g, b.kernel, b.grad_out, b.grad_in);
      vd::kernels::conv2d_backward_kernel(b.g, b.input, b.grad_out, b.grad_kernel);
    } else {
      vd::kernels::reference::conv2d_backward_input(b.g, b.kernel, b.grad_out, b.grad_in);
      vd::kernels::reference::conv2d_backward_kernel(b.g, b.input, b.grad_out, b.grad_kernel);
    }
    benchmark::DoNotOptimize(b.grad_in.data());
    benchmark::DoNotOptimize(b.grad_kernel.data());
  }
}

template <bool Parallel>
void BM_Bilinear(benchmark::State& state) {
  const int c = 16, in = static_cast<int>(state.range(0)), out = 2 * in;
  const auto input = random_buffer(static_cast<std::size_t>(c) * in * in, 4);
  std::vector<double> output(static_cast<std::size_t>(c) * out * out);
  std::vector<double> grad_in(input.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      vd::kernels::bilinear_forward(c, in, in, out, out, input, output);
      vd::kernels::bilinear_backward(c, in, in, out, out, output, grad_in);
    } else {
      vd::kernels::reference::bilinear_forward(c, in, in, out, out, input, output);
      vd::kernels::reference::bilinear_backward(c, in, in, out, out, output, grad_in);
    }
    benchmark::DoNotOptimize(grad_in.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->DenseRange(0, 4)->Name("conv_forward/parallel");
BENCHMARK(BM_ConvForward<false>)->DenseRange(0, 4)->Name("conv_forward/reference");
BENCHMARK(BM_ConvBackward<true>)->DenseRange(0, 4)->Name("conv_backward/parallel");
BENCHMARK(BM_ConvBackward<false>)->DenseRange(0, 4)->Name("conv_backward/reference");
BENCHMARK(BM_Bilinear<true>)->Arg(8)->Arg(32)->Name("bilinear/parallel");
BENCHMARK(BM_Bilinear<false>)->Arg(8)->Arg(32)->Name("bilinear/reference");

BENCHMARK_MAIN();
