// Production kernels against their serial reference versions, at the
// shapes the 64x64 default network actually runs.

#include <benchmark/benchmark.h>

#include <vector>

#include "fsg/kernels.hpp"
#include "fsg/rng.hpp"

namespace {

using fsg::PadQuad;
using fsg::Shape;
using fsg::kernels::ConvGeometry;

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  fsg::SplitMix64 rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

// args: batch, in_c, out_c, hw, k
ConvGeometry geometry(const benchmark::State& st) {
  const int k = static_cast<int>(st.range(4));
  return ConvGeometry{Shape{static_cast<int>(st.range(0)), static_cast<int>(st.range(1)),
                            static_cast<int>(st.range(3)), static_cast<int>(st.range(3))},
                      static_cast<int>(st.range(2)), k, k, 1, PadQuad::same(k / 2), 1};
}

template <bool kReference>
void BM_ConvForward(benchmark::State& st) {
  const ConvGeometry g = geometry(st);
  const auto x = random_buffer(g.input.numel(), 1);
  const auto w = random_buffer(g.weight_count(), 2);
  const auto b = random_buffer(g.out_c, 3);
  std::vector<float> y(g.output().numel());
  for (auto _ : st) {
    if constexpr (kReference) {
      fsg::kernels::conv2d_forward_reference(g, x.data(), w.data(), b.data(), y.data());
    } else {
      fsg::kernels::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
  st.counters["MACs"] = benchmark::Counter(static_cast<double>(g.macs()) * st.iterations(),
                                           benchmark::Counter::kIsRate);
}

template <bool kReference>
void BM_ConvBackward(benchmark::State& st) {
  const ConvGeometry g = geometry(st);
  const auto x = random_buffer(g.input.numel(), 1);
  const auto w = random_buffer(g.weight_count(), 2);
  const auto dy = random_buffer(g.output().numel(), 3);
  std::vector<float> dx(x.size()), dw(w.size()), db(g.out_c);
  for (auto _ : st) {
    if constexpr (kReference) {
      fsg::kernels::conv2d_backward_reference(g, x.data(), w.data(), dy.data(), dx.data(),
                                              dw.data(), db.data());
    } else {
      fsg::kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(),
                                    db.data());
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool kReference>
void BM_BilinearUp2(benchmark::State& st) {
  const Shape in{8, static_cast<int>(st.range(0)), static_cast<int>(st.range(1)),
                 static_cast<int>(st.range(1))};
  const auto x = random_buffer(in.numel(), 4);
  std::vector<float> y(in.numel() * 4);
  for (auto _ : st) {
    if constexpr (kReference) {
      fsg::kernels::upsample_forward_reference(in, 2, fsg::kernels::Interp::kBilinear, x.data(),
                                               y.data());
    } else {
      fsg::kernels::upsample_forward(in, 2, fsg::kernels::Interp::kBilinear, x.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_Fft2d(benchmark::State& st) {
  const int planes = static_cast<int>(st.range(0));
  const int hw = static_cast<int>(st.range(1));
  const auto re = random_buffer(static_cast<std::size_t>(planes) * hw * hw, 5);
  std::vector<float> out_re(re.size()), out_im(re.size());
  for (auto _ : st) {
    fsg::kernels::fft2d_planes(planes, hw, hw, re.data(), static_cast<const float*>(nullptr),
                               out_re.data(), out_im.data(), false);
    benchmark::DoNotOptimize(out_re.data());
  }
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({8, 8, 8, 64, 3})
      ->Args({8, 16, 16, 32, 3})
      ->Args({8, 32, 32, 16, 3})
      ->Args({8, 64, 64, 8, 3})
      ->Args({8, 32, 32, 64, 1})
      ->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Apply(conv_shapes);
BENCHMARK(BM_ConvForward<true>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<false>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<true>)->Apply(conv_shapes);
BENCHMARK(BM_BilinearUp2<false>)->Args({16, 32})->Args({64, 8});
BENCHMARK(BM_BilinearUp2<true>)->Args({16, 32})->Args({64, 8});
BENCHMARK(BM_Fft2d)->Args({128, 64})->Args({256, 8});

BENCHMARK_MAIN();
