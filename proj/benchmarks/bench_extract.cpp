#include <benchmark/benchmark.h>

#include <string>

#include "hallu/extract.hpp"

namespace {

const std::string kReport =
    "PA and lateral views of the chest. There is a moderate right pleural effusion with adjacent "
    "atelectasis. No pneumothorax. Heart size is mildly enlarged; cannot exclude early pulmonary edema. "
    "Possible small consolidation at the left base. No acute fracture. Confidence: 82%.";

void BM_SplitSentences(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(hallu::split_sentences(kReport));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * kReport.size()));
}
BENCHMARK(BM_SplitSentences);

void BM_Extract(benchmark::State& state) {
    const hallu::Extractor ex;
    for (auto _ : state) benchmark::DoNotOptimize(ex.extract(kReport));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * kReport.size()));
}
BENCHMARK(BM_Extract);

void BM_ParseConfidence(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(hallu::parse_confidence(kReport));
}
BENCHMARK(BM_ParseConfidence);

}  // namespace
