// Serial vs OpenMP paths for the three hot spots: per-slice fitting, curve
// estimation and whole experiments. Arg 0 = serial, 1 = parallel.
#include <random>

#include <benchmark/benchmark.h>

#include "slicetuner/harness.hpp"

using namespace slicetuner;

namespace {

ExperimentConfig heterogeneous() { return load_config(std::string(CONFIG_DIR) + "/heterogeneous.conf"); }

Execution exec_of(const benchmark::State& state) { return state.range(0) ? Execution::parallel : Execution::serial; }

void BM_FitSliceCurves(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.02);
    std::vector<std::vector<CurvePoint>> points(64);
    for (std::size_t i = 0; i < points.size(); ++i)
        for (int k = 1; k <= 10; ++k) {
            const double s = 30.0 * k;
            points[i].push_back({s, 2.0 * std::pow(s, -0.4 - 0.003 * double(i)) + noise(rng), s});
        }
    for (auto _ : state) benchmark::DoNotOptimize(fit_slice_curves(points, false, exec_of(state)));
}
BENCHMARK(BM_FitSliceCurves)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EstimateCurves(benchmark::State& state) {
    const auto cfg = heterogeneous();
    const auto mode = state.range(1) ? EstimationMode::exhaustive : EstimationMode::amortized;
    for (auto _ : state) {
        auto oracle = make_oracle(cfg, 11);
        benchmark::DoNotOptimize(estimate_curves(*oracle, cfg.partition, cfg.curves, mode, exec_of(state)));
    }
}
BENCHMARK(BM_EstimateCurves)->ArgsProduct({{0, 1}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_Experiment(benchmark::State& state) {
    auto cfg = heterogeneous();
    cfg.parallel = state.range(0) != 0;
    for (auto _ : state) benchmark::DoNotOptimize(run_experiment(cfg));
}
BENCHMARK(BM_Experiment)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
