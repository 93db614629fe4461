// Serial reference vs OpenMP kernels, plus end-to-end suggest latency.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "vcsc/completion.hpp"
#include "vcsc/corpus.hpp"
#include "vcsc/kernels.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <auto Kernel>
void BM_gemv(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0));
  const auto out = static_cast<std::size_t>(state.range(1));
  const auto w = random_values(in * out, 1);
  const auto x = random_values(in, 2);
  std::vector<double> y(out);
  for (auto _ : state) {
    Kernel(x, w.data(), in, out, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(in * out));
}

template <auto Kernel>
void BM_gemv_t(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0));
  const auto out = static_cast<std::size_t>(state.range(1));
  const auto w = random_values(in * out, 1);
  const auto dy = random_values(out, 2);
  std::vector<double> dx(in);
  for (auto _ : state) {
    Kernel(dy, w.data(), in, out, dx);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(in * out));
}

template <auto Kernel>
void BM_outer(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0));
  const auto out = static_cast<std::size_t>(state.range(1));
  const auto x = random_values(in, 3);
  const auto dy = random_values(out, 4);
  std::vector<double> dw(in * out);
  for (auto _ : state) {
    Kernel(x, dy, dw.data());
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(in * out));
}

void kernel_sizes(benchmark::internal::Benchmark* b) {
  b->Args({128, 128})->Args({2048, 64})->Args({128, 4000})->Args({1024, 1024});
}

// Full suggest call at the service configuration; threads via OMP_NUM_THREADS.
void BM_suggest(benchmark::State& state) {
  vcsc::DecoderConfig cfg;
  std::vector<std::string> corpus;
  std::string alphabet;
  for (char32_t cp = 0x4e00; cp < 0x4e00 + 3000; ++cp) alphabet += vcsc::utf8_encode(cp);
  corpus.push_back(alphabet);
  vcsc::AbdModel model;
  model.vocab = vcsc::Vocabulary::build(corpus);
  cfg.m = model.vocab.size();
  model.config = cfg;
  std::mt19937_64 rng(7);
  model.backward = vcsc::DecoderParams::random(cfg, cfg.d_embed, rng);
  model.forward = vcsc::DecoderParams::random(cfg, cfg.d, rng);
  model.attention = vcsc::AttentionParams::random(cfg, rng);
  const std::vector<std::string> ids{"img"};
  const auto features = vcsc::synthetic_features(ids, cfg.feature_dim, 3);
  vcsc::CompletionRequest req{features.at("img"), "一只狗在草地上", 3, 5};
  for (auto _ : state) benchmark::DoNotOptimize(vcsc::complete_abd(model, req));
}

}  // namespace

BENCHMARK(BM_gemv<vcsc::kernels::serial::gemv_acc>)->Name("gemv/serial")->Apply(kernel_sizes);
BENCHMARK(BM_gemv<vcsc::kernels::omp::gemv_acc>)->Name("gemv/omp")->Apply(kernel_sizes);
BENCHMARK(BM_gemv_t<vcsc::kernels::serial::gemv_t_acc>)->Name("gemv_t/serial")->Apply(kernel_sizes);
BENCHMARK(BM_gemv_t<vcsc::kernels::omp::gemv_t_acc>)->Name("gemv_t/omp")->Apply(kernel_sizes);
BENCHMARK(BM_outer<vcsc::kernels::serial::outer_acc>)->Name("outer/serial")->Apply(kernel_sizes);
BENCHMARK(BM_outer<vcsc::kernels::omp::outer_acc>)->Name("outer/omp")->Apply(kernel_sizes);
BENCHMARK(BM_suggest)->Name("suggest/abd_k5_d128_N30")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
