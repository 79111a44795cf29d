// Serial reference kernels against their OpenMP variants.
//
//   ./build/bench/bench_kernels --benchmark_filter=energy
//   OMP_NUM_THREADS=4 ./build/bench/bench_kernels

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dform/kernels.hpp"

using namespace dform;

namespace {

struct SpectralInput {
  Matrix q;
  Vector sqrt_m, g, u;
};

SpectralInput spectral_input(Eigen::Index n) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.5, 2.0);
  SpectralInput in{Matrix::Random(n, n), Vector(n), Vector(n), Vector::Random(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    in.sqrt_m[i] = unit(rng);
    in.g[i] = unit(rng);
  }
  return in;
}

struct EnergyInput {
  std::vector<Edge> edges;
  Vector killing, u;
};

EnergyInput energy_input(std::size_t n) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> vertex(0, n - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  EnergyInput in{{}, Vector(static_cast<Eigen::Index>(n)), Vector::Random(static_cast<Eigen::Index>(n))};
  for (std::size_t e = 0; e < 8 * n; ++e) {
    const std::size_t i = vertex(rng), j = vertex(rng);
    if (i != j) in.edges.push_back({i, j, unit(rng)});
  }
  for (Eigen::Index i = 0; i < in.killing.size(); ++i) in.killing[i] = unit(rng) < 0.1 ? unit(rng) : 0.0;
  return in;
}

template <auto Kernel>
void spectral_apply(benchmark::State& state) {
  const SpectralInput in = spectral_input(state.range(0));
  Vector out;
  for (auto _ : state) {
    Kernel(in.q, in.sqrt_m, in.g, in.u, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

template <auto Kernel>
void spectral_operator(benchmark::State& state) {
  const SpectralInput in = spectral_input(state.range(0));
  Matrix out;
  for (auto _ : state) {
    Kernel(in.q, in.g, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0) * state.range(0));
}

template <auto Kernel>
void energy(benchmark::State& state) {
  const EnergyInput in = energy_input(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(in.edges, in.killing, in.u));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in.edges.size()));
}

}  // namespace

BENCHMARK(spectral_apply<kernels::spectral_apply_serial>)->Name("spectral_apply/serial")->RangeMultiplier(4)->Range(64, 2048);
BENCHMARK(spectral_apply<kernels::spectral_apply_parallel>)->Name("spectral_apply/openmp")->RangeMultiplier(4)->Range(64, 2048);
BENCHMARK(spectral_operator<kernels::spectral_operator_serial>)->Name("spectral_operator/serial")->RangeMultiplier(4)->Range(64, 512);
BENCHMARK(spectral_operator<kernels::spectral_operator_parallel>)->Name("spectral_operator/openmp")->RangeMultiplier(4)->Range(64, 512);
BENCHMARK(energy<kernels::energy_serial>)->Name("energy/serial")->RangeMultiplier(8)->Range(1 << 10, 1 << 19);
BENCHMARK(energy<kernels::energy_parallel>)->Name("energy/openmp")->RangeMultiplier(8)->Range(1 << 10, 1 << 19);

BENCHMARK_MAIN();
