#include <benchmark/benchmark.h>

#include <random>

#include "ratefit/conditional.hpp"
#include "ratefit/odds.hpp"
#include "ratefit/ratio.hpp"
#include "ratefit/simulate.hpp"
#include "ratefit/survival.hpp"

namespace {

ratefit::StratifiedDataset make_dataset(std::size_t strata, std::int64_t rows) {
    std::mt19937_64 g(7);
    std::vector<ratefit::Stratum> out;
    for (std::size_t j = 0; j < strata; ++j) {
        std::binomial_distribution<std::int64_t> row1(rows, 0.3);
        std::binomial_distribution<std::int64_t> row2(rows, 0.2);
        const std::int64_t n11 = row1(g);
        const std::int64_t n21 = row2(g);
        out.push_back({ratefit::StratumTable(n11, rows - n11, n21, rows - n21),
                       ratefit::Vector::Ones(1)});
    }
    return ratefit::StratifiedDataset(std::move(out));
}

std::vector<ratefit::SurvivalRecord> make_records(int n) {
    ratefit::WeibullScenario sc;
    sc.n = n;
    const std::vector<ratefit::RawRecord> raw = ratefit::generate_survival(sc, 7, 0);
    const ratefit::TimeGrid grid = ratefit::TimeGrid::regular(sc.grid_step, sc.horizon);
    return ratefit::discretize(raw, grid, sc.convention);
}

void bm_fit_odds(benchmark::State& state) {
    const auto ds = make_dataset(static_cast<std::size_t>(state.range(0)), 16);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ratefit::fit_odds(ds, ratefit::OddsWeight::weighted()));
    }
}
BENCHMARK(bm_fit_odds)->Arg(10)->Arg(100)->Arg(1000);

void bm_fit_ratio(benchmark::State& state) {
    const auto ds = make_dataset(static_cast<std::size_t>(state.range(0)), 16);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ratefit::fit_ratio(ds));
    }
}
BENCHMARK(bm_fit_ratio)->Arg(10)->Arg(100)->Arg(1000);

void bm_fit_conditional(benchmark::State& state) {
    const auto ds = make_dataset(static_cast<std::size_t>(state.range(0)), 16);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ratefit::fit_conditional(ds));
    }
}
BENCHMARK(bm_fit_conditional)->Arg(10)->Arg(100);

void bm_build_panel(benchmark::State& state) {
    const auto records = make_records(static_cast<int>(state.range(0)));
    const ratefit::TimeBasis basis = ratefit::TimeBasis::indicator_pieces({1.0});
    for (auto _ : state) {
        benchmark::DoNotOptimize(ratefit::build_panel(records, basis));
    }
}
BENCHMARK(bm_build_panel)->Arg(200)->Arg(1000);

void bm_survival_robust_cov(benchmark::State& state) {
    const auto records = make_records(static_cast<int>(state.range(0)));
    const auto panel = ratefit::build_panel(records, ratefit::TimeBasis::indicator_pieces({1.0}));
    const ratefit::FitResult fit = ratefit::fit_survival_ratio(panel);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            ratefit::cov_survival(panel, fit.estimate, ratefit::SurvivalCovKind::RatioRobust));
    }
}
BENCHMARK(bm_survival_robust_cov)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
