#include <random>

#include <benchmark/benchmark.h>

#include "dhh/histories.hpp"
#include "dhh/qbm_propagator.hpp"

using namespace dhh;

namespace {

const QbmParams kParams{1.0, 1.0, 1.0};

WignerGrid state(std::size_t nq, std::size_t np) {
  return gaussian_wigner(Axis(-20, 20, nq), Axis(-6, 6, np), 0.0, 0.0, 0.25, 1.0);
}

void BM_FokkerPlanckStep(benchmark::State& st) {
  const auto w = state(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(0)) / 2);
  const double dt = fokker_planck_max_dt(w, kParams);
  for (auto _ : st) benchmark::DoNotOptimize(step_fokker_planck(w, dt, kParams));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(w.values().size()));
}
BENCHMARK(BM_FokkerPlanckStep)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_PropagateAnalytic(benchmark::State& st) {
  const auto w = state(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(0)) / 2);
  for (auto _ : st) benchmark::DoNotOptimize(propagate_analytic(w, 5.0, kParams));
}
BENCHMARK(BM_PropagateAnalytic)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_MasterStep(benchmark::State& st) {
  const Axis x(-8, 8, static_cast<std::size_t>(st.range(0)));
  Eigen::VectorXcd psi(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) psi(Eigen::Index(i)) = std::exp(-x[i] * x[i]);
  const auto rho = DensityMatrix::from_wavefunction(x, psi);
  const double dt = master_equation_max_dt(x, kParams);
  for (auto _ : st) benchmark::DoNotOptimize(step_master_equation(rho, dt, kParams));
}
BENCHMARK(BM_MasterStep)->Arg(65)->Arg(129)->Unit(benchmark::kMicrosecond);

void BM_DecoherenceFunctionalOccupation(benchmark::State& st) {
  const auto N = static_cast<std::size_t>(st.range(0));
  std::mt19937_64 rng(1);
  const ToyHilbert h(3, N, kDenseCap);
  const CVector a = random_state(3, rng);
  const auto rho = product_density(a * a.adjoint(), N);
  HistorySpec hs;
  hs.evolution.one_body_hamiltonian = random_hermitian(3, rng);
  hs.evolution.space = h;
  hs.slots = {{0.0, {occupation_family(h)}}, {0.3, {occupation_family(h)}}};
  for (auto _ : st) benchmark::DoNotOptimize(decoherence_functional(rho, hs));
}
BENCHMARK(BM_DecoherenceFunctionalOccupation)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_DecoherenceFunctionalPure(benchmark::State& st) {
  const auto N = static_cast<std::size_t>(st.range(0));
  std::mt19937_64 rng(2);
  const ToyHilbert h(2, N);
  HistorySpec hs;
  hs.slots = {{0.0, {occupation_family(h)}}};
  const auto psi = product_state(random_state(2, rng), N);
  for (auto _ : st) benchmark::DoNotOptimize(history_probabilities(psi, hs));
}
BENCHMARK(BM_DecoherenceFunctionalPure)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
