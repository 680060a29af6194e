#include "kgf/graph_search.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>

namespace kgf {

namespace {

constexpr std::uint32_t kUnreached = std::numeric_limits<std::uint32_t>::max();

std::vector<std::uint32_t> bfs_distances(const KnowledgeGraph& g, NodeIndex start) {
    std::vector<std::uint32_t> dist(g.node_count(), kUnreached);
    std::deque<NodeIndex> queue;
    dist[start] = 0;
    queue.push_back(start);
    while (!queue.empty()) {
        NodeIndex u = queue.front();
        queue.pop_front();
        for (const AdjEntry& e : g.adjacent(u)) {
            if (dist[e.neighbor] == kUnreached) {
                dist[e.neighbor] = dist[u] + 1;
                queue.push_back(e.neighbor);
            }
        }
    }
    return dist;
}

// Smallest relation label on the (u, v) edge; adjacency is sorted by
// (neighbor, relation label), so the first hit wins.
const std::string& edge_relation(const KnowledgeGraph& g, NodeIndex u, NodeIndex v) {
    for (const AdjEntry& e : g.adjacent(u)) {
        if (e.neighbor == v) return g.relation_label(e.relation);
        if (e.neighbor > v) break;
    }
    throw std::logic_error("edge_relation: nodes not adjacent");
}

// DFS over the shortest-path DAG (edges that step one hop closer to the
// target). Visiting neighbors in ascending node index = ascending node_id
// yields paths in lexicographic node-sequence order.
void collect_paths(const KnowledgeGraph& g, NodeIndex u, NodeIndex target,
                   const std::vector<std::uint32_t>& dist_to_target, std::vector<NodeIndex>& stack,
                   std::size_t limit, std::vector<std::vector<NodeIndex>>& out) {
    if (out.size() >= limit) return;
    if (u == target) {
        out.push_back(stack);
        return;
    }
    NodeIndex prev = kUnreached;
    for (const AdjEntry& e : g.adjacent(u)) {
        if (e.neighbor == prev) continue;  // parallel relations, same neighbor
        prev = e.neighbor;
        if (dist_to_target[e.neighbor] + 1 != dist_to_target[u]) continue;
        stack.push_back(e.neighbor);
        collect_paths(g, e.neighbor, target, dist_to_target, stack, limit, out);
        stack.pop_back();
        if (out.size() >= limit) return;
    }
}

ReasoningPath materialize(const KnowledgeGraph& g, const std::vector<NodeIndex>& idx_path) {
    ReasoningPath path;
    path.nodes.reserve(idx_path.size());
    for (NodeIndex i : idx_path) path.nodes.push_back(g.node(i).node_id);
    path.relations.reserve(idx_path.size() - 1);
    for (std::size_t i = 0; i + 1 < idx_path.size(); ++i) {
        path.relations.push_back(edge_relation(g, idx_path[i], idx_path[i + 1]));
    }
    return path;
}

std::vector<std::vector<NodeIndex>> shortest_path_indices(const KnowledgeGraph& g, std::string_view source,
                                                          std::string_view target, std::size_t limit) {
    auto src = g.find(source);
    auto dst = g.find(target);
    if (!src) throw std::out_of_range("unknown node id: " + std::string(source));
    if (!dst) throw std::out_of_range("unknown node id: " + std::string(target));
    if (*src == *dst) throw std::invalid_argument("source and target must differ");
    if (limit < 1) throw std::invalid_argument("limit must be >= 1");

    auto dist = bfs_distances(g, *dst);
    std::vector<std::vector<NodeIndex>> out;
    if (dist[*src] == kUnreached) return out;
    std::vector<NodeIndex> stack{*src};
    collect_paths(g, *src, *dst, dist, stack, limit, out);
    return out;
}

}  // namespace

std::vector<std::string> ReasoningPath::interior() const {
    if (nodes.size() <= 2) return {};
    return {nodes.begin() + 1, nodes.end() - 1};
}

Subgraph bfs_subgraph(const KnowledgeGraph& graph, std::string_view seed, int depth) {
    auto root = graph.find(seed);
    if (!root) throw std::out_of_range("unknown node id: " + std::string(seed));
    if (depth < 0) throw std::invalid_argument("depth must be >= 0");

    Subgraph sub;
    sub.seed = std::string(seed);
    sub.depth = depth;

    std::unordered_map<NodeIndex, int> dist;
    std::deque<NodeIndex> queue;
    dist[*root] = 0;
    queue.push_back(*root);
    while (!queue.empty()) {
        NodeIndex u = queue.front();
        queue.pop_front();
        int du = dist[u];
        if (du == depth) continue;
        for (const AdjEntry& e : graph.adjacent(u)) {
            if (dist.emplace(e.neighbor, du + 1).second) queue.push_back(e.neighbor);
        }
    }
    sub.members.reserve(dist.size());
    for (auto [idx, d] : dist) sub.members.emplace(graph.node(idx).node_id, d);
    return sub;
}

std::set<std::string> intersect_subgraphs(std::span<const Subgraph> subgraphs) {
    if (subgraphs.empty()) throw std::invalid_argument("intersect_subgraphs: empty input");
    std::set<std::string> acc;
    for (const auto& [id, d] : subgraphs.front().members) acc.insert(id);
    for (std::size_t i = 1; i < subgraphs.size(); ++i) {
        std::set<std::string> next;
        for (const auto& id : acc) {
            if (subgraphs[i].members.count(id)) next.insert(id);
        }
        acc = std::move(next);
    }
    for (const auto& sub : subgraphs) acc.erase(sub.seed);
    return acc;
}

std::vector<ReasoningPath> enumerate_shortest_paths(const KnowledgeGraph& graph, std::string_view source,
                                                    std::string_view target, std::size_t limit) {
    auto idx_paths = shortest_path_indices(graph, source, target, limit);
    std::vector<ReasoningPath> out;
    out.reserve(idx_paths.size());
    for (const auto& p : idx_paths) out.push_back(materialize(graph, p));
    return out;
}

std::vector<ReasoningPath> sample_shortest_paths(const KnowledgeGraph& graph, std::string_view source,
                                                 std::string_view target, std::size_t limit,
                                                 std::uint64_t seed) {
    // Enumerate the whole equal-length set (capped defensively), then draw a
    // seeded uniform subset and restore lexicographic order.
    constexpr std::size_t kEnumerationCap = 100000;
    auto all = shortest_path_indices(graph, source, target, kEnumerationCap);
    std::vector<ReasoningPath> out;
    if (all.size() <= limit) {
        out.reserve(all.size());
        for (const auto& p : all) out.push_back(materialize(graph, p));
        return out;
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> pick(all.size());
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    for (std::size_t i = 0; i < limit; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, pick.size() - 1);
        std::swap(pick[i], pick[d(rng)]);
    }
    pick.resize(limit);
    std::sort(pick.begin(), pick.end());
    out.reserve(limit);
    for (std::size_t i : pick) out.push_back(materialize(graph, all[i]));
    return out;
}

}  // namespace kgf
