#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "coag/cell_problem.hpp"
#include "coag/macro_pde.hpp"
#include "coag/micro_sim.hpp"
#include "coag/spatial_hash.hpp"

namespace {

coag::Configuration uniform_cloud(std::int64_t n, double big_z, double side, std::uint64_t seed) {
  const auto params = coag::build_params(3, big_z, n);
  coag::InitialDensities h({{1, coag::UniformBox{{0, 0, 0}, {side, side, side}}, big_z}});
  coag::Philox4x32 rng(seed);
  return coag::sample_initial(h, params, coag::Domain::torus(side), rng);
}

void BM_PairSearch(benchmark::State& state) {
  const auto n = state.range(0);
  const double big_z = 0.05 * static_cast<double>(n);
  const double side = std::cbrt(big_z);
  const auto cfg = uniform_cloud(n, big_z, side, 7);
  coag::SpatialHash hash(3, cfg.epsilon, cfg.domain);
  std::vector<coag::PairCandidate> pairs;
  for (auto _ : state) {
    pairs.clear();
    hash.rebuild(cfg.particles);
    hash.pairs(cfg.particles, pairs);
    benchmark::DoNotOptimize(pairs.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_PairSearch)->Arg(2000)->Arg(16000)->Unit(benchmark::kMillisecond);

void BM_MicroStep(benchmark::State& state) {
  const auto n = state.range(0);
  const double big_z = 0.05 * static_cast<double>(n);
  const double side = std::cbrt(big_z);
  auto cfg = uniform_cloud(n, big_z, side, 11);
  coag::MicroModel model{coag::build_params(3, big_z, n),
                         coag::make_kernel(3, {}),
                         coag::RatePolicy::constant(1.0),
                         coag::DiffusionPolicy::constant(0.5),
                         coag::Domain::torus(side)};
  coag::SpatialHash hash(3, cfg.epsilon, cfg.domain);
  coag::Philox4x32 rng(3);
  std::vector<coag::PairCandidate> pairs;
  for (auto _ : state) {
    coag::diffuse(cfg, model.dd, model.params.tau, rng);
    pairs.clear();
    hash.rebuild(cfg.particles);
    hash.pairs(cfg.particles, pairs);
    auto res = coag::coagulate_step(cfg, model, pairs, model.params.tau, rng);
    benchmark::DoNotOptimize(res.rate_sum);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_MicroStep)->Arg(2000)->Arg(16000)->Unit(benchmark::kMillisecond);

void BM_CellSolveRadial(benchmark::State& state) {
  const auto v = coag::make_kernel(3, {});
  auto grid = std::make_shared<const coag::CellGrid>(coag::make_radial_grid(v));
  for (auto _ : state) {
    auto sol = coag::solve_cell_problem(v, 10.0, grid);
    benchmark::DoNotOptimize(sol.integral);
  }
}
BENCHMARK(BM_CellSolveRadial)->Unit(benchmark::kMillisecond);

void BM_CellSolveCartesian(benchmark::State& state) {
  coag::KernelSpec spec;
  spec.shape = "ellipsoid";
  spec.axes = {1.0, 0.7, 0.5};
  const auto v = coag::make_kernel(3, spec);
  auto grid = std::make_shared<const coag::CellGrid>(coag::make_cartesian_grid(v));
  for (auto _ : state) {
    auto sol = coag::solve_cell_problem(v, 1.0, grid);
    benchmark::DoNotOptimize(sol.integral);
  }
}
BENCHMARK(BM_CellSolveCartesian)->Unit(benchmark::kMillisecond);

void BM_MacroStep(benchmark::State& state) {
  const int m_max = static_cast<int>(state.range(0));
  coag::MacroModel model{coag::BetaMatrix(m_max, 1.0)};
  auto field = coag::make_homogeneous(m_max, {1.0});
  for (auto _ : state) {
    coag::step_homogeneous(field, model, 1e-3);
    benchmark::DoNotOptimize(field.f.data());
  }
}
BENCHMARK(BM_MacroStep)->Arg(50)->Arg(200);

}  // namespace
BENCHMARK_MAIN();
