#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kgf {

using NodeIndex = std::uint32_t;

struct KGNode {
    std::string node_id;
    std::string name;
    std::string category;
};

struct KGEdge {
    std::string source;
    std::string target;
    std::string relation;
};

// Incident edge as stored in the adjacency lists. Relations are interned.
struct AdjEntry {
    NodeIndex neighbor;
    std::uint32_t relation;
};

enum class GraphFormat {
    PrimeKG,  // relation, display_relation, x_id, x_type, x_name, y_id, y_type, y_name
    Compact,  // source_id, source_name, source_type, target_id, target_name, target_type, relation
};

struct LoadStats {
    std::size_t rows_read = 0;
    std::size_t self_loops_dropped = 0;
    std::size_t duplicates_collapsed = 0;
};

class IngestError : public std::runtime_error {
public:
    IngestError(const std::string& msg, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Immutable undirected biomedical knowledge graph. Nodes are indexed in
// lexicographic node_id order so that iteration, serialization and
// path enumeration are stable regardless of input row order. Safe for
// unlimited concurrent readers once constructed.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    // Parses a delimited edge list (comma by default, tab accepted; the
    // delimiter is sniffed from the header row). Duplicate rows and reversed
    // duplicates collapse to one undirected edge; self-loop rows are dropped
    // and counted. Throws IngestError with the offending line number.
    static KnowledgeGraph load(std::istream& in, GraphFormat format, LoadStats* stats = nullptr);

    // Loads either a compiled binary index or a delimited edge list,
    // sniffing the magic header.
    static KnowledgeGraph load_file(const std::string& path, GraphFormat format = GraphFormat::PrimeKG,
                                    LoadStats* stats = nullptr);

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    std::optional<NodeIndex> find(std::string_view node_id) const;
    const KGNode& node(NodeIndex idx) const { return nodes_.at(idx); }

    // Exact-id lookup; ids are case-sensitive. Absence is a value.
    std::optional<KGNode> get_node(std::string_view node_id) const;

    // All incident edges of node_id as (neighbor id, relation label) pairs,
    // sorted. Throws std::out_of_range for unknown ids.
    std::vector<std::pair<std::string, std::string>> neighbors(std::string_view node_id) const;

    // Index-based adjacency for the search algorithms. Entries are sorted by
    // (neighbor index, relation label); neighbor indices follow node_id order.
    std::span<const AdjEntry> adjacent(NodeIndex idx) const;

    const std::string& relation_label(std::uint32_t rel) const { return relations_.at(rel); }

    // Normalized display name -> node indices (sorted). Covers every node.
    const std::vector<NodeIndex>* lookup_name(std::string_view normalized_name) const;

    // Distinct normalized names, sorted; backing data for fuzzy linking.
    const std::vector<std::string>& normalized_names() const { return name_keys_; }

    const std::vector<KGNode>& nodes() const { return nodes_; }
    const std::vector<std::pair<NodeIndex, NodeIndex>>& edge_endpoints() const { return edges_; }
    const std::vector<std::uint32_t>& edge_relations() const { return edge_rels_; }

    // Versioned binary index; byte-identical for identical logical graphs.
    void write_index(std::ostream& out) const;
    static KnowledgeGraph read_index(std::istream& in);

private:
    void finalize();

    std::vector<KGNode> nodes_;                            // sorted by node_id
    std::unordered_map<std::string, NodeIndex> id_index_;  // node_id -> index
    std::vector<std::string> relations_;                   // interned labels, sorted
    std::vector<std::pair<NodeIndex, NodeIndex>> edges_;   // canonical (lo, hi), sorted
    std::vector<std::uint32_t> edge_rels_;
    std::vector<std::vector<AdjEntry>> adjacency_;
    std::vector<std::string> name_keys_;                      // sorted normalized names
    std::vector<std::vector<NodeIndex>> name_values_;         // parallel to name_keys_
};

}  // namespace kgf
