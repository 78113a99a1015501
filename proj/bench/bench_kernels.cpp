#include "scm/kernels.hpp"
#include "scm/synthetic.hpp"
#include "scm/train.hpp"

#include <benchmark/benchmark.h>

#include <omp.h>

namespace {

struct Fixture {
  scm::Design design;
  scm::ScmParams params;

  explicit Fixture(int n) {
    scm::SyntheticSpec spec;
    spec.n = n;
    spec.n_controls = 8;
    spec.control_effects.assign(8, 0.2);
    const auto study = scm::generate_synthetic(spec);
    const auto roles = scm::VariableRoles::make(study.data, study.control_names, study.exposure_names.front());
    design = scm::Design::from(study.data, roles);
    scm::TrainConfig cfg;
    cfg.cadres = 3;
    params = scm::initial_params(design, cfg, 7);
  }
};

const Fixture& fixture(int n) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Fixture(n)).first;
  return it->second;
}

void BM_DataTermSerial(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scm::kernels::data_term_serial(f.design, f.params, {}, true).value);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_DataTermParallel(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scm::kernels::data_term(f.design, f.params, {}, true).value);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MembershipSerial(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scm::kernels::membership_batch_serial(f.design.xc, f.params).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MembershipParallel(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(scm::kernels::membership_batch(f.design.xc, f.params).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_DataTermSerial)->Arg(2000)->Arg(20000);
BENCHMARK(BM_DataTermParallel)->Arg(2000)->Arg(20000);
BENCHMARK(BM_MembershipSerial)->Arg(2000)->Arg(20000);
BENCHMARK(BM_MembershipParallel)->Arg(2000)->Arg(20000);

BENCHMARK_MAIN();
