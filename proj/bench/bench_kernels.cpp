// Parallel kernel vs the serial reference on the same fixed rule.
#include <benchmark/benchmark.h>

#include "chiralcasimir/forcengine.hpp"

using namespace chiralcasimir;

namespace {

forcengine::LatticePairConfig standard(double z) {
  forcengine::LatticePairConfig c;
  c.lower = forcengine::Body::from_cell(lattice::standard_omega_cell(+1));
  c.upper = c.lower;
  c.z = z;
  c.quadrature.xi_order = 12;
  c.quadrature.k_order = 4;
  c.quadrature.max_refinements = 0;
  c.quadrature.rel_tol = 1.0;
  return c;
}

void BM_parallel(benchmark::State& st) {
  const auto c = standard(st.range(0) / 2.0);
  for (auto _ : st) benchmark::DoNotOptimize(forcengine::casimir(c, forcengine::Kernel::parallel));
}

void BM_serial_reference(benchmark::State& st) {
  const auto c = standard(st.range(0) / 2.0);
  for (auto _ : st)
    benchmark::DoNotOptimize(forcengine::casimir(c, forcengine::Kernel::serial_reference));
}

void BM_sweep_parallel(benchmark::State& st) {
  forcengine::SweepConfig s;
  s.base = standard(2.0);
  s.z_grid = {4.0};
  s.x_grid = {0.0, 0.5};
  for (auto _ : st) benchmark::DoNotOptimize(forcengine::sweep_sc_oc(s));
}

void BM_sweep_serial_reference(benchmark::State& st) {
  forcengine::SweepConfig s;
  s.base = standard(2.0);
  s.z_grid = {4.0};
  s.x_grid = {0.0, 0.5};
  for (auto _ : st)
    benchmark::DoNotOptimize(forcengine::sweep_sc_oc(s, forcengine::Kernel::serial_reference));
}

}  // namespace

// Argument: 2 z.
BENCHMARK(BM_parallel)->Arg(3)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_serial_reference)->Arg(3)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep_serial_reference)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
