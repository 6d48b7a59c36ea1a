#include <benchmark/benchmark.h>

#include "hallu/detect.hpp"
#include "hallu/synth.hpp"

namespace {

const hallu::synth::Generated& corpus() {
    static const auto g = [] {
        auto spec = hallu::synth::SynthSpec::defaults();
        spec.n_images = 300;
        spec.seed = 5;
        return hallu::synth::generate(spec);
    }();
    return g;
}

void BM_DetectAll(benchmark::State& state) {
    const auto& g = corpus();
    const hallu::Extractor ex;
    const auto jobs = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(hallu::detect_all(g.corpus, ex, jobs));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * g.corpus.records().size()));
}
BENCHMARK(BM_DetectAll)->Arg(1)->Arg(4)->UseRealTime();

}  // namespace
