// Serial against OpenMP timings of the hot kernels. Arg 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include "mfeq/equilibrium.h"
#include "mfeq/market.h"
#include "mfeq/model.h"
#include "mfeq/paths.h"

using namespace mfeq;

namespace {

Exec exec_arg(const benchmark::State& st) { return st.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

void set_label(benchmark::State& st) { st.SetLabel(st.range(0) == 0 ? "serial" : "parallel"); }

void BM_SampleBatch(benchmark::State& st) {
    const MarketSpec mk = preset("terminal-common-noise");
    for (auto _ : st) {
        ScenarioBatch b = sample_batch(mk.grid, 1, 20000, mk.factor, mk.init_laws(), exec_arg(st));
        benchmark::DoNotOptimize(b.b.data.data());
    }
    set_label(st);
}

void BM_Buckets(benchmark::State& st) {
    const MarketSpec mk = preset("terminal-common-noise");
    const ScenarioBatch b = sample_batch(mk.grid, 1, 20000, mk.factor, mk.init_laws());
    for (auto _ : st) {
        Buckets bk = bucket_samples(b.node_path, mk.grid, KeyMode::FullPrefix, exec_arg(st));
        benchmark::DoNotOptimize(bk.key_of.data());
    }
    set_label(st);
}

void BM_PhiAffine(benchmark::State& st) {
    const MarketSpec mk = preset("single-informed");
    const ScenarioBatch b = sample_batch(mk.grid, 1, 20000, mk.factor, mk.init_laws());
    const Workspace ws = make_workspace(b, mk.mode, 30);
    const DiscretePrice theta = make_price(*ws.buckets, 0.1);
    PhiOptions po;
    po.exec = exec_arg(st);
    po.solve.exec = po.exec;
    for (auto _ : st) {
        PhiResult r = apply_phi(theta, b, mk, ws, po);
        benchmark::DoNotOptimize(r.sup_Y_I);
    }
    set_label(st);
}

void BM_PhiConvex(benchmark::State& st) {
    const MarketSpec mk = preset("convex");
    const ScenarioBatch b = sample_batch(mk.grid, 1, 5000, mk.factor, mk.init_laws());
    const Workspace ws = make_workspace(b, mk.mode, 30);
    const DiscretePrice theta = make_price(*ws.buckets, 0.1);
    PhiOptions po;
    po.exec = exec_arg(st);
    po.solve.exec = po.exec;
    for (auto _ : st) {
        PhiResult r = apply_phi(theta, b, mk, ws, po);
        benchmark::DoNotOptimize(r.sup_Y_I);
    }
    set_label(st);
}

void BM_ClearingResidual(benchmark::State& st) {
    const MarketSpec mk = preset("single-informed");
    const ScenarioBatch b = sample_batch(mk.grid, 1, 5000, mk.factor, mk.init_laws());
    FixedPointOptions fo;
    fo.tol = 1e-6;
    const EquilibriumReport eq = solve_fixed_point(b, mk, fo);
    for (auto _ : st) {
        ResidualEstimate r = clearing_residual(eq, mk, 64, 64, 3, 8, exec_arg(st));
        benchmark::DoNotOptimize(r.value);
    }
    set_label(st);
}

} // namespace

BENCHMARK(BM_SampleBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Buckets)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PhiAffine)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PhiConvex)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ClearingResidual)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
