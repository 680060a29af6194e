#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "kgf/graph_search.hpp"
#include "kgf/kg_store.hpp"

namespace {

// Random sparse graph sized by the benchmark argument.
kgf::KnowledgeGraph make_graph(std::size_t nodes, double edge_prob, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::ostringstream csv;
    csv << "source_id,source_name,source_type,target_id,target_name,target_type,relation\n";
    auto id = [](std::size_t i) {
        char buf[16];
        snprintf(buf, sizeof(buf), "n%04zu", i);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < nodes; ++i) {
        csv << id(i) << "," << id(i) << ",t," << id((i + 1) % nodes) << "," << id((i + 1) % nodes)
            << ",t,ring\n";
        for (std::size_t j = i + 2; j < nodes; ++j) {
            if (u(rng) < edge_prob) {
                csv << id(i) << "," << id(i) << ",t," << id(j) << "," << id(j) << ",t,rel\n";
            }
        }
    }
    std::istringstream in(csv.str());
    return kgf::KnowledgeGraph::load(in, kgf::GraphFormat::Compact);
}

void BM_BfsSubgraph(benchmark::State& state) {
    auto nodes = static_cast<std::size_t>(state.range(0));
    auto g = make_graph(nodes, 8.0 / static_cast<double>(nodes), 42);
    const std::string seed_id = g.node(0).node_id;
    for (auto _ : state) {
        auto sub = kgf::bfs_subgraph(g, seed_id, 2);
        benchmark::DoNotOptimize(sub.members.size());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BfsSubgraph)->Range(64, 4096)->Complexity();

void BM_EnumerateShortestPaths(benchmark::State& state) {
    auto nodes = static_cast<std::size_t>(state.range(0));
    auto g = make_graph(nodes, 8.0 / static_cast<double>(nodes), 7);
    const std::string src = g.node(0).node_id;
    const std::string dst = g.node(static_cast<kgf::NodeIndex>(nodes / 2)).node_id;
    for (auto _ : state) {
        auto paths = kgf::enumerate_shortest_paths(g, src, dst, 30);
        benchmark::DoNotOptimize(paths.size());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EnumerateShortestPaths)->Range(64, 4096)->Complexity();

void BM_IntersectSubgraphs(benchmark::State& state) {
    auto nodes = static_cast<std::size_t>(state.range(0));
    auto g = make_graph(nodes, 8.0 / static_cast<double>(nodes), 99);
    std::vector<kgf::Subgraph> subs;
    for (std::size_t i = 0; i < 4; ++i) {
        subs.push_back(kgf::bfs_subgraph(g, g.node(static_cast<kgf::NodeIndex>(i * nodes / 4)).node_id, 2));
    }
    for (auto _ : state) {
        auto inter = kgf::intersect_subgraphs(subs);
        benchmark::DoNotOptimize(inter.size());
    }
}
BENCHMARK(BM_IntersectSubgraphs)->Range(64, 4096);

}  // namespace

BENCHMARK_MAIN();
