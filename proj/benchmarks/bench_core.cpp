#include <benchmark/benchmark.h>

#include "dyadic/instance.hpp"

using namespace dyadic;

namespace {

Instance bench_instance(int depth, OperatorFamily fam, int radius) {
  InstanceParams p;
  p.depth = depth;
  p.seed = 1;
  p.radius = radius;
  p.measure = MeasureLaw::IidPositive;
  p.system = SystemMode::Stopping;
  p.op = fam;
  return make_instance(p);
}

void BM_Decompose(benchmark::State& state) {
  const Lattice lat(1, static_cast<int>(state.range(0)));
  Rng rng(2);
  const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
  const SystemCalculus sc(random_system(m, SystemMode::Stopping, 0.5, 2.0, rng), m);
  const StepFunction f = random_function(lat, rng);
  for (auto _ : state) benchmark::DoNotOptimize(sc.decompose(f));
  state.SetComplexityN(lat.num_leaves());
}
BENCHMARK(BM_Decompose)->DenseRange(6, 16, 2)->Complexity();

void BM_StoppingConstruction(benchmark::State& state) {
  const Lattice lat(1, static_cast<int>(state.range(0)));
  Rng rng(3);
  const Measure m = random_measure(lat, MeasureLaw::AtomHeavy, rng);
  for (auto _ : state) benchmark::DoNotOptimize(random_system(m, SystemMode::Stopping, 0.5, 2.0, rng));
}
BENCHMARK(BM_StoppingConstruction)->DenseRange(6, 14, 4);

void BM_OperatorNorm(benchmark::State& state) {
  const Instance inst = bench_instance(static_cast<int>(state.range(0)), OperatorFamily::Diagonal, 0);
  Rng rng(4);
  const OperatorRep t = make_dense_random(inst.mu, inst.nu, rng);
  for (auto _ : state) benchmark::DoNotOptimize(t.norm());
}
BENCHMARK(BM_OperatorNorm)->DenseRange(4, 8, 2);

void BM_WlLocal(benchmark::State& state) {
  const Instance inst = bench_instance(static_cast<int>(state.range(0)), OperatorFamily::ShiftCandidate, 1);
  const SystemCalculus s1(inst.b1, inst.mu), s2(inst.b2, inst.nu);
  for (auto _ : state) benchmark::DoNotOptimize(check_wl_local(inst.op, s1, s2, 1));
}
BENCHMARK(BM_WlLocal)->DenseRange(3, 6, 1)->Unit(benchmark::kMillisecond);

void BM_TraceLocal(benchmark::State& state) {
  const Instance inst = bench_instance(static_cast<int>(state.range(0)), OperatorFamily::ShiftCandidate, 1);
  const SystemCalculus s1(inst.b1, inst.mu), s2(inst.b2, inst.nu);
  Rng rng(5);
  const StepFunction f = random_function(inst.lattice(), rng), g = random_function(inst.lattice(), rng);
  for (auto _ : state) benchmark::DoNotOptimize(trace_local(inst.op, s1, s2, 1, f, g));
}
BENCHMARK(BM_TraceLocal)->DenseRange(3, 6, 1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
