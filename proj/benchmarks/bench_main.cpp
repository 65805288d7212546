#include <benchmark/benchmark.h>

#include <vector>

#include "qcl/engine.hpp"
#include "qcl/network.hpp"
#include "qcl/noise.hpp"
#include "qcl/oracle.hpp"

namespace {

using namespace qcl;

BathSpec bath(double T = 0.1) { return {SpectralDensity::lorentzian(0.3, 0.5, 0.1), T}; }

void BM_NoiseSynthesis(benchmark::State& st) {
    const NoiseSynthesizer s(bath(), 0.2, static_cast<std::size_t>(st.range(0)));
    std::vector<double> out(s.size());
    std::uint64_t seed = 0;
    for (auto _ : st) {
        s.generate_into(++seed, out);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_NoiseSynthesis)->Arg(1 << 12)->Arg(1 << 16);

void BM_EmbeddedEnsemble(benchmark::State& st) {
    SimConfig c;
    c.dt = 0.05;
    c.t_final = 20.0;
    c.n_traj = static_cast<std::size_t>(st.range(0));
    c.sample_every = 20;
    c.threads = 1;
    for (auto _ : st) benchmark::DoNotOptimize(run_ensemble(c, OscillatorParams{}, bath()));
    st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_EmbeddedEnsemble)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_SteadyQuadrature(benchmark::State& st) {
    const BathSpec b = bath(st.range(0) / 10.0);
    for (auto _ : st) benchmark::DoNotOptimize(steady_covariances_quadrature(OscillatorParams{}, b));
}
BENCHMARK(BM_SteadyQuadrature)->Arg(1)->Arg(10)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_SteadyMatsubara(benchmark::State& st) {
    const auto j = SpectralDensity::lorentzian(0.3, 0.5, 0.1);
    for (auto _ : st) benchmark::DoNotOptimize(steady_covariances_matsubara(OscillatorParams{}, j, 0.1));
}
BENCHMARK(BM_SteadyMatsubara)->Unit(benchmark::kMicrosecond);

void BM_NetworkSteady(benchmark::State& st) {
    const auto b = [](double T) { return BathSpec{SpectralDensity::lorentzian(0.3, 0.5, 0.8), T}; };
    const Network net = build_network(two_oscillator_chain(OscillatorParams{}, 0.1, b(1.0), b(0.1)));
    for (auto _ : st) benchmark::DoNotOptimize(network_steady_covariances(net));
}
BENCHMARK(BM_NetworkSteady)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
