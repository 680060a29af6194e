#include <benchmark/benchmark.h>

#include <random>

#include "kgf/consolidation.hpp"
#include "kgf/gateway.hpp"

namespace {

std::vector<std::vector<double>> random_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> v(n, std::vector<double>(dim));
    for (auto& row : v) {
        for (auto& x : row) x = u(rng);
    }
    return v;
}

void BM_KMeans(benchmark::State& state) {
    auto n = static_cast<std::size_t>(state.range(0));
    auto vectors = random_vectors(n, 256, 5);
    for (auto _ : state) {
        auto r = kgf::kmeans(vectors, static_cast<int>(n / 3 + 1), 17);
        benchmark::DoNotOptimize(r.assignment.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KMeans)->Range(16, 512)->Complexity();

void BM_HashEmbed(benchmark::State& state) {
    std::string text = "how long has the symptom been present and does anything make it worse";
    for (auto _ : state) {
        auto v = kgf::hash_embed(text, 256);
        benchmark::DoNotOptimize(v.data());
    }
}
BENCHMARK(BM_HashEmbed);

void BM_Consolidate(benchmark::State& state) {
    auto n = static_cast<std::size_t>(state.range(0));
    auto provider = std::make_shared<kgf::ScriptedProvider>();
    provider->add_rule({"merge", {}, "Could you describe the symptom further?"});
    kgf::Gateway gateway(provider, {});
    auto prompts = kgf::PromptSet::defaults();
    kgf::QuestionSet set;
    const char* words[] = {"fever", "cough", "pain", "rash", "sleep", "travel", "weight", "diet"};
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> w(0, 7);
    for (std::size_t i = 0; i < n; ++i) {
        set.questions.push_back(kgf::FollowupQuestion{
            std::string("Any ") + words[w(rng)] + " trouble " + std::to_string(i % 11) + "?",
            kgf::Channel::Pre,
            {}});
    }
    for (auto _ : state) {
        auto out = kgf::consolidate(set, gateway, prompts, 20, 9);
        benchmark::DoNotOptimize(out.set.questions.size());
    }
}
BENCHMARK(BM_Consolidate)->Range(16, 256);

}  // namespace
