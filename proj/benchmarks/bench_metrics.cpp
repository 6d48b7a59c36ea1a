#include <benchmark/benchmark.h>

#include <vector>

#include "hallu/logistic.hpp"
#include "hallu/metrics.hpp"
#include "hallu/random.hpp"

namespace {

void BM_RocAuc(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    hallu::Rng rng(1);
    std::vector<double> scores(n);
    std::vector<bool> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = rng.normal();
        labels[i] = scores[i] + rng.normal() > 0;
    }
    for (auto _ : state) benchmark::DoNotOptimize(hallu::metrics::roc_auc(scores, labels));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RocAuc)->RangeMultiplier(4)->Range(1 << 10, 1 << 16)->Complexity();

void BM_LogisticFit(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    hallu::Rng rng(2);
    hallu::metrics::FeatureMatrix x(n, {"length", "stratum", "vqa", "clinical"});
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double eta = -0.5;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            x.at(i, c) = rng.normal();
            eta += 0.4 * x.at(i, c);
        }
        y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta)));
    }
    for (auto _ : state) benchmark::DoNotOptimize(hallu::metrics::logistic_fit(x, y));
}
BENCHMARK(BM_LogisticFit)->Arg(1000)->Arg(15408);

void BM_BootstrapMean(benchmark::State& state) {
    hallu::Rng rng(3);
    std::vector<double> x(1000);
    for (auto& v : x) v = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(hallu::metrics::bootstrap_ci(x, hallu::metrics::mean, {1000, 0.95, 4}));
    }
}
BENCHMARK(BM_BootstrapMean);

}  // namespace
