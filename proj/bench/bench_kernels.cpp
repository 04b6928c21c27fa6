// Slice kernel (dense vs spectral), the filter pass, and the replication
// loop serial vs parallel. On a single core the parallel numbers only show
// the scheduling overhead.
#include "dysarar/estimation.hpp"
#include "dysarar/parallel.hpp"
#include "dysarar/simulation_lab.hpp"
#include "dysarar/slice_kernel.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace dysarar;

namespace {

struct Panel {
    WeightMatrix w1, w2;
    PanelMatrix y;
    RegressorPanel x;
};

Panel make_panel(Eigen::Index n, Eigen::Index periods) {
    WeightMatrix w1 = random_weight_matrix(n, 1.0, 1), w2 = random_weight_matrix(n, 1.0, 2);
    const ModelSpec spec = ModelSpec::from_label("DySARAR-DHe.CHe", n, 0);
    CoefficientVector c = CoefficientVector::zeros(spec.layout());
    c.kappa(0) = 0.5;
    c.kappa(1) = 0.2;
    c.f.setConstant(0.03);
    c.r.setConstant(0.98);
    RegressorPanel x = empty_regressors(periods, n);
    PanelMatrix y = simulate_model(c, spec, x, w1, w2, 3).y;
    return {std::move(w1), std::move(w2), std::move(y), std::move(x)};
}

void slice(benchmark::State& state, KernelKind kind) {
    const auto n = static_cast<Eigen::Index>(state.range(0));
    const Panel p = make_panel(n, 4);
    SliceKernel k(p.w1, p.w2, kind);
    const Vector y = p.y.row(0).transpose();
    const Vector w1y = p.w1.weights() * y, w2w1y = p.w2.weights() * w1y;
    const NaturalParams th{0.4, 0.2, Vector(0), Vector::Ones(n)};
    Vector score;
    for (auto _ : state) benchmark::DoNotOptimize(k.evaluate(y, w1y, w2w1y, p.x[0], th, &score));
}

void BM_SliceDense(benchmark::State& s) { slice(s, KernelKind::dense); }
void BM_SliceSpectral(benchmark::State& s) { slice(s, KernelKind::spectral); }
BENCHMARK(BM_SliceDense)->Arg(6)->Arg(20)->Arg(50);
BENCHMARK(BM_SliceSpectral)->Arg(6)->Arg(20)->Arg(50);

void filter(benchmark::State& state, KernelKind kind) {
    const Panel p = make_panel(static_cast<Eigen::Index>(state.range(0)), 1000);
    const ModelSpec spec = ModelSpec::from_label("DySARAR-DHe.CHe", p.y.cols(), 0);
    CoefficientVector c = CoefficientVector::zeros(spec.layout());
    c.f.setConstant(0.02);
    c.r.setConstant(0.97);
    const FilterData data(p.y, p.x, p.w1, p.w2);
    FilterOptions o;
    o.kernel = kind;
    for (auto _ : state) benchmark::DoNotOptimize(filter_pass(data, c, spec, o).total_llk);
}

void BM_FilterDense(benchmark::State& s) { filter(s, KernelKind::dense); }
void BM_FilterSpectral(benchmark::State& s) { filter(s, KernelKind::spectral); }
BENCHMARK(BM_FilterDense)->Arg(6)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FilterSpectral)->Arg(6)->Arg(20)->Unit(benchmark::kMillisecond);

// many independent filter passes, the shape of a Monte Carlo replication loop
void replications(benchmark::State& state, Execution mode) {
    const Panel p = make_panel(6, 500);
    const ModelSpec spec = ModelSpec::from_label("DySARAR-DHe.CHe", 6, 0);
    const FilterData data(p.y, p.x, p.w1, p.w2);
    std::vector<double> out(32);
    for (auto _ : state) {
        for_each_index(out.size(), mode, [&](std::size_t i) {
            CoefficientVector c = CoefficientVector::zeros(spec.layout());
            c.f.setConstant(0.01 + 0.001 * static_cast<double>(i));
            c.r.setConstant(0.95);
            out[i] = filter_pass(data, c, spec).total_llk;
        });
        benchmark::DoNotOptimize(out.data());
    }
    state.counters["workers"] = worker_count();
}

void BM_ReplicationsSerial(benchmark::State& s) { replications(s, Execution::serial); }
void BM_ReplicationsParallel(benchmark::State& s) { replications(s, Execution::parallel); }
BENCHMARK(BM_ReplicationsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReplicationsParallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
