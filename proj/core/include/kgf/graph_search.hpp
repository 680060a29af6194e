#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgf/kg_store.hpp"

namespace kgf {

// Depth-bounded BFS neighborhood. Member distances are exact unweighted
// shortest-hop distances from the seed.
struct Subgraph {
    std::string seed;
    int depth = 0;
    std::unordered_map<std::string, int> members;  // node_id -> hop distance
};

// Simple path from a source entity to a target diagnosis. relations[i]
// labels the edge nodes[i] -- nodes[i+1].
struct ReasoningPath {
    std::vector<std::string> nodes;
    std::vector<std::string> relations;

    const std::string& source() const { return nodes.front(); }
    const std::string& target() const { return nodes.back(); }
    std::size_t length() const { return relations.size(); }

    // Nodes strictly between source and target.
    std::vector<std::string> interior() const;
};

// Throws std::out_of_range for an unknown seed, std::invalid_argument for
// a negative depth.
Subgraph bfs_subgraph(const KnowledgeGraph& graph, std::string_view seed, int depth);

// Intersection of the member node sets, with every input's seed excluded:
// the seeds are the query, not the discovery. Throws std::invalid_argument
// on an empty list.
std::set<std::string> intersect_subgraphs(std::span<const Subgraph> subgraphs);

// All simple paths of minimal hop length from source to target, in
// lexicographic node-id order, truncated to the first `limit` paths. The
// empty list means the target is unreachable. Throws std::out_of_range for
// unknown endpoints and std::invalid_argument when source == target or
// limit < 1.
std::vector<ReasoningPath> enumerate_shortest_paths(const KnowledgeGraph& graph, std::string_view source,
                                                    std::string_view target, std::size_t limit);

// Seeded uniform sample (without replacement) of `limit` paths from the full
// shortest-path set, returned in lexicographic order. Matches
// enumerate_shortest_paths when the set fits within the limit.
std::vector<ReasoningPath> sample_shortest_paths(const KnowledgeGraph& graph, std::string_view source,
                                                 std::string_view target, std::size_t limit,
                                                 std::uint64_t seed);

}  // namespace kgf
