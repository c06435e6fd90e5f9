// Serial reference kernels versus their OpenMP versions.
#include "rbsde/backward_solver.hpp"
#include "rbsde/forward_sde.hpp"
#include "rbsde/game_analysis.hpp"
#include "rbsde/isaacs_pde.hpp"
#include "rbsde/problem_model.hpp"

#include <benchmark/benchmark.h>

namespace {

rbsde::Exec exec_of(const benchmark::State& state) {
    return state.range(0) == 0 ? rbsde::Exec::serial : rbsde::Exec::parallel;
}

void set_label(benchmark::State& state) { state.SetLabel(state.range(0) == 0 ? "serial" : "parallel"); }

void BM_SimulatePaths(benchmark::State& state) {
    const auto g = rbsde::builtin_instance("american_put");
    const rbsde::TimeMesh mesh(0.0, g.T, 100);
    const rbsde::Vector x0 = rbsde::Vector::Constant(1, 100.0);
    const auto u = rbsde::ControlPath::constant(0);
    for (auto _ : state) {
        auto bundle = rbsde::simulate_paths(g, x0, mesh, u, u, 20000, 7, exec_of(state));
        benchmark::DoNotOptimize(bundle.raw_states().data());
    }
    set_label(state);
}
BENCHMARK(BM_SimulatePaths)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ReflectedSolve(benchmark::State& state) {
    const auto g = rbsde::builtin_instance("american_put");
    const rbsde::TimeMesh mesh(0.0, g.T, 50);
    const rbsde::Vector x0 = rbsde::Vector::Constant(1, 100.0);
    const auto u = rbsde::ControlPath::constant(0);
    const auto bundle = rbsde::simulate_paths(g, x0, mesh, u, u, 20000, 7);
    std::vector<double> terminal(bundle.paths());
    for (std::size_t i = 0; i < bundle.paths(); ++i) terminal[i] = g.terminal(bundle.state(i, mesh.steps()));
    for (auto _ : state) {
        auto sol = rbsde::solve_reflected(g, bundle, terminal, rbsde::RegressionBasis{2}, exec_of(state));
        benchmark::DoNotOptimize(sol.y0());
    }
    set_label(state);
}
BENCHMARK(BM_ReflectedSolve)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ObstaclePde1d(benchmark::State& state) {
    const auto g = rbsde::builtin_instance("american_put");
    const std::vector<std::pair<double, double>> box{{20.0, 300.0}};
    const std::vector<int> nx{281};
    const rbsde::SpaceTimeGrid grid(box, nx, rbsde::min_cfl_steps(g, box, nx), g.T);
    for (auto _ : state) {
        auto w = rbsde::solve_obstacle_pde(rbsde::Side::lower, g, grid, exec_of(state));
        benchmark::DoNotOptimize(w.at(0, 0));
    }
    set_label(state);
}
BENCHMARK(BM_ObstaclePde1d)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_UpperValue(benchmark::State& state) {
    const auto g = rbsde::builtin_instance("minimax_gap");
    const std::vector<std::pair<double, double>> box{{-3.0, 3.0}};
    const std::vector<int> nx{801};
    const rbsde::SpaceTimeGrid grid(box, nx, rbsde::min_cfl_steps(g, box, nx), g.T);
    for (auto _ : state) {
        auto w = rbsde::upper_value(g, grid, exec_of(state));
        benchmark::DoNotOptimize(w.at(0, 0));
    }
    set_label(state);
}
BENCHMARK(BM_UpperValue)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
