#include <benchmark/benchmark.h>

#include <random>

#include "oneirotax/corpus.hpp"
#include "oneirotax/embedding.hpp"
#include "oneirotax/hdbscan.hpp"
#include "oneirotax/kmeans.hpp"
#include "oneirotax/taxonomy.hpp"
#include "oneirotax/topics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace oneirotax;

namespace {

const Corpus& synthetic() {
    static const Corpus c = load_corpus(testing::data_path("synthetic_500.jsonl"));
    return c;
}

void BM_Segment(benchmark::State& state) {
    const auto& docs = synthetic().documents;
    for (auto _ : state) {
        std::size_t n = 0;
        for (const auto& d : docs) n += segment(d).size();
        benchmark::DoNotOptimize(n);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(docs.size()));
}
BENCHMARK(BM_Segment);

void BM_Ctfidf(benchmark::State& state) {
    std::mt19937_64 rng(1);
    std::vector<int> topics;
    std::vector<std::string> sentences;
    while (sentences.size() < static_cast<std::size_t>(state.range(0))) {
        auto c = oracle::random_corpus(rng, 200, 8);
        topics.insert(topics.end(), c.topics.begin(), c.topics.end());
        sentences.insert(sentences.end(), c.sentences.begin(), c.sentences.end());
    }
    for (auto _ : state) benchmark::DoNotOptimize(ctfidf(topics, sentences, 2));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sentences.size()));
}
BENCHMARK(BM_Ctfidf)->Arg(1000)->Arg(10000);

void BM_Hdbscan(benchmark::State& state) {
    const auto [m, truth] = testing::two_blobs(static_cast<std::size_t>(state.range(0)) / 2, 5, 10.0, 3);
    HdbscanParams p;
    p.min_cluster_size = 50;
    for (auto _ : state) benchmark::DoNotOptimize(hdbscan(m, p));
}
BENCHMARK(BM_Hdbscan)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> pts(300, std::vector<double>(5));
    for (auto& p : pts)
        for (auto& v : p) v = g(rng);
    KMeansParams p;
    p.k = 20;
    p.restarts = static_cast<std::size_t>(state.range(0));
    p.seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(kmeans(pts, p));
}
BENCHMARK(BM_KMeans)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_NoiseCorrected(benchmark::State& state) {
    std::mt19937_64 rng(4);
    WeightedGraph g;
    const int n = static_cast<int>(state.range(0));
    for (int i = 0; i < n; ++i) g.nodes.insert(i);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng() % 2) g.add(i, j, 1 + rng() % 500);
    for (auto _ : state) benchmark::DoNotOptimize(noise_corrected_backbone(g, 3.8));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.edges.size()));
}
BENCHMARK(BM_NoiseCorrected)->Arg(22)->Arg(217);

void BM_StubEmbed(benchmark::State& state) {
    StubProvider p("stub-hash-v1", 768, 0);
    std::vector<std::string> texts;
    for (int i = 0; i < 256; ++i) texts.push_back("sentence number " + std::to_string(i));
    for (auto _ : state) benchmark::DoNotOptimize(p.embed_batch(texts));
    state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_StubEmbed);

}  // namespace
BENCHMARK_MAIN();
