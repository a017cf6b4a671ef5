#include "mcal/glasso.hpp"
#include "mcal/outcome.hpp"
#include "mcal/propensity.hpp"
#include "mcal/simulation.hpp"
#include "mcal/tuning.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace mcal;

namespace {

Dataset c1_draw(Index n, Index p)
{
    return standardize(gen_data(ScenarioId::C1, n, p, 11, 0).data).first;
}

void BM_BlockUpdate(benchmark::State& state)
{
    const Index n = state.range(0);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    Matrix partial(n, 3);
    Vector fj(n);
    for (Index i = 0; i < n; ++i) {
        fj(i) = z(rng);
        for (Index c = 0; c < 3; ++c) {
            partial(i, c) = z(rng);
        }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(block_update(partial, fj, 0.05));
    }
}
BENCHMARK(BM_BlockUpdate)->Arg(500)->Arg(5000);

void BM_RcalFit(benchmark::State& state)
{
    const Dataset d = c1_draw(1000, state.range(0));
    const double lambda = 0.1 * lambda_star_ps(d, PsLoss::Cal, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_rcal_ps(d, 0, lambda, Constraint::OneToZero, SolveConfig{}));
    }
}
BENCHMARK(BM_RcalFit)->Arg(50)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_RcalFitUniform(benchmark::State& state)
{
    const Dataset d = c1_draw(1000, 50);
    const double lambda = 0.1 * lambda_star_ps(d, PsLoss::Cal, 0);
    SolveConfig cfg;
    cfg.curvature = Curvature::Uniform;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_rcal_ps(d, 0, lambda, Constraint::OneToZero, cfg));
    }
}
BENCHMARK(BM_RcalFitUniform)->Unit(benchmark::kMillisecond);

void BM_RwlFit(benchmark::State& state)
{
    const Dataset d = c1_draw(1000, 50);
    const Matrix probs = predict_probs(
        fit_rcal_ps(d, 0, 0.1 * lambda_star_ps(d, PsLoss::Cal, 0), Constraint::OneToZero, SolveConfig{}).model, d.f);
    const double lambda = 0.1 * lambda_star_rwl(d, 0, probs, Link::Identity);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_rwl(d, 0, probs, lambda, Link::Identity, SolveConfig{}));
    }
}
BENCHMARK(BM_RwlFit)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
