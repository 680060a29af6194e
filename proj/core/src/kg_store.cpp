#include "kgf/kg_store.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "kgf/text.hpp"

namespace kgf {

namespace {

constexpr char kIndexMagic[4] = {'K', 'G', 'F', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

// Splits one delimited line, honoring double-quoted fields with "" escapes.
std::vector<std::string> split_row(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

struct ColumnMap {
    int rel = -1, display_rel = -1;
    int src_id = -1, src_type = -1, src_name = -1;
    int dst_id = -1, dst_type = -1, dst_name = -1;
};

ColumnMap map_columns(const std::vector<std::string>& header, GraphFormat format) {
    std::map<std::string, int> pos;
    for (std::size_t i = 0; i < header.size(); ++i) pos[trim(to_lower(header[i]))] = static_cast<int>(i);
    auto need = [&](const char* name) {
        auto it = pos.find(name);
        if (it == pos.end()) throw IngestError(std::string("missing required column '") + name + "'", 1);
        return it->second;
    };
    ColumnMap m;
    if (format == GraphFormat::PrimeKG) {
        m.rel = need("relation");
        m.display_rel = need("display_relation");
        m.src_id = need("x_id");
        m.src_type = need("x_type");
        m.src_name = need("x_name");
        m.dst_id = need("y_id");
        m.dst_type = need("y_type");
        m.dst_name = need("y_name");
    } else {
        m.src_id = need("source_id");
        m.src_name = need("source_name");
        m.src_type = need("source_type");
        m.dst_id = need("target_id");
        m.dst_name = need("target_name");
        m.dst_type = need("target_type");
        m.rel = need("relation");
    }
    return m;
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("truncated graph index");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
    std::uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("truncated graph index");
    return s;
}

}  // namespace

KnowledgeGraph KnowledgeGraph::load(std::istream& in, GraphFormat format, LoadStats* stats) {
    std::string header_line;
    if (!std::getline(in, header_line) || trim(header_line).empty()) {
        throw IngestError("empty input", 0);
    }
    char delim = header_line.find('\t') != std::string::npos ? '\t' : ',';
    auto header = split_row(header_line, delim);
    ColumnMap cols = map_columns(header, format);
    std::size_t width = header.size();

    // Raw accumulation keyed by node_id; finalize() canonicalizes.
    struct RawNode {
        std::string name, category;
    };
    std::map<std::string, RawNode> raw_nodes;
    std::map<std::string, std::uint32_t> rel_intern;
    std::vector<std::string> rel_labels;
    std::set<std::tuple<std::string, std::string, std::uint32_t>> seen;  // (lo, hi, rel)

    LoadStats local;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_row(line, delim);
        if (fields.size() != width) {
            throw IngestError("expected " + std::to_string(width) + " columns, got " +
                                  std::to_string(fields.size()),
                              line_no);
        }
        ++local.rows_read;
        std::string src = trim(fields[cols.src_id]);
        std::string dst = trim(fields[cols.dst_id]);
        if (src.empty() || dst.empty()) throw IngestError("empty node id", line_no);

        // Prefer the human-readable display_relation when the dialect has one.
        std::string rel = trim(fields[cols.rel]);
        if (cols.display_rel >= 0) {
            std::string disp = trim(fields[cols.display_rel]);
            if (!disp.empty()) rel = disp;
        }

        auto& sn = raw_nodes[src];
        if (sn.name.empty()) {
            sn.name = trim(fields[cols.src_name]);
            sn.category = trim(fields[cols.src_type]);
        }
        auto& dn = raw_nodes[dst];
        if (dn.name.empty()) {
            dn.name = trim(fields[cols.dst_name]);
            dn.category = trim(fields[cols.dst_type]);
        }

        if (src == dst) {
            ++local.self_loops_dropped;
            continue;
        }
        auto [rit, fresh] = rel_intern.try_emplace(rel, static_cast<std::uint32_t>(rel_labels.size()));
        if (fresh) rel_labels.push_back(rel);
        std::string lo = src, hi = dst;
        if (hi < lo) std::swap(lo, hi);
        if (!seen.emplace(std::move(lo), std::move(hi), rit->second).second) {
            ++local.duplicates_collapsed;
        }
    }
    if (local.rows_read == 0) throw IngestError("no data rows", line_no);

    KnowledgeGraph g;
    g.nodes_.reserve(raw_nodes.size());
    for (auto& [id, rn] : raw_nodes) {
        g.nodes_.push_back(KGNode{id, rn.name.empty() ? id : rn.name, rn.category});
    }
    // Re-intern relation labels in sorted order so the index is canonical.
    std::vector<std::string> sorted_rels = rel_labels;
    std::sort(sorted_rels.begin(), sorted_rels.end());
    sorted_rels.erase(std::unique(sorted_rels.begin(), sorted_rels.end()), sorted_rels.end());
    std::map<std::string, std::uint32_t> rel_remap;
    for (std::size_t i = 0; i < sorted_rels.size(); ++i) rel_remap[sorted_rels[i]] = static_cast<std::uint32_t>(i);
    g.relations_ = std::move(sorted_rels);

    std::unordered_map<std::string, NodeIndex> tmp_index;
    tmp_index.reserve(g.nodes_.size());
    for (std::size_t i = 0; i < g.nodes_.size(); ++i) tmp_index[g.nodes_[i].node_id] = static_cast<NodeIndex>(i);
    for (const auto& [lo, hi, old_rel] : seen) {
        g.edges_.emplace_back(tmp_index.at(lo), tmp_index.at(hi));
        g.edge_rels_.push_back(rel_remap.at(rel_labels[old_rel]));
    }
    g.finalize();
    if (stats) *stats = local;
    return g;
}

KnowledgeGraph KnowledgeGraph::load_file(const std::string& path, GraphFormat format, LoadStats* stats) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open graph file: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    in.seekg(0);
    if (in.gcount() == 4 && std::memcmp(magic, kIndexMagic, 4) == 0) {
        return read_index(in);
    }
    in.clear();
    return load(in, format, stats);
}

void KnowledgeGraph::finalize() {
    // Nodes arrive sorted by node_id (std::map order). Sort edges canonically,
    // then build symmetric adjacency with (neighbor, relation-label) ordering.
    id_index_.clear();
    id_index_.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) id_index_[nodes_[i].node_id] = static_cast<NodeIndex>(i);

    std::vector<std::size_t> order(edges_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(edges_[a].first, edges_[a].second, edge_rels_[a]) <
               std::tie(edges_[b].first, edges_[b].second, edge_rels_[b]);
    });
    std::vector<std::pair<NodeIndex, NodeIndex>> sorted_edges(edges_.size());
    std::vector<std::uint32_t> sorted_rels(edges_.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted_edges[i] = edges_[order[i]];
        sorted_rels[i] = edge_rels_[order[i]];
    }
    edges_ = std::move(sorted_edges);
    edge_rels_ = std::move(sorted_rels);

    adjacency_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        auto [u, v] = edges_[i];
        adjacency_[u].push_back(AdjEntry{v, edge_rels_[i]});
        adjacency_[v].push_back(AdjEntry{u, edge_rels_[i]});
    }
    for (auto& adj : adjacency_) {
        std::sort(adj.begin(), adj.end(), [&](const AdjEntry& a, const AdjEntry& b) {
            if (a.neighbor != b.neighbor) return a.neighbor < b.neighbor;
            return relations_[a.relation] < relations_[b.relation];
        });
    }

    std::map<std::string, std::vector<NodeIndex>> by_name;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        by_name[normalize_term(nodes_[i].name)].push_back(static_cast<NodeIndex>(i));
    }
    name_keys_.clear();
    name_values_.clear();
    name_keys_.reserve(by_name.size());
    name_values_.reserve(by_name.size());
    for (auto& [name, idxs] : by_name) {
        std::sort(idxs.begin(), idxs.end());
        name_keys_.push_back(name);
        name_values_.push_back(std::move(idxs));
    }
}

std::optional<NodeIndex> KnowledgeGraph::find(std::string_view node_id) const {
    auto it = id_index_.find(std::string(node_id));
    if (it == id_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<KGNode> KnowledgeGraph::get_node(std::string_view node_id) const {
    auto idx = find(node_id);
    if (!idx) return std::nullopt;
    return nodes_[*idx];
}

std::vector<std::pair<std::string, std::string>> KnowledgeGraph::neighbors(std::string_view node_id) const {
    auto idx = find(node_id);
    if (!idx) throw std::out_of_range("unknown node id: " + std::string(node_id));
    std::vector<std::pair<std::string, std::string>> out;
    for (const AdjEntry& e : adjacency_[*idx]) {
        out.emplace_back(nodes_[e.neighbor].node_id, relations_[e.relation]);
    }
    return out;
}

std::span<const AdjEntry> KnowledgeGraph::adjacent(NodeIndex idx) const {
    return {adjacency_.at(idx).data(), adjacency_.at(idx).size()};
}

const std::vector<NodeIndex>* KnowledgeGraph::lookup_name(std::string_view normalized_name) const {
    auto it = std::lower_bound(name_keys_.begin(), name_keys_.end(), normalized_name);
    if (it == name_keys_.end() || *it != normalized_name) return nullptr;
    return &name_values_[static_cast<std::size_t>(it - name_keys_.begin())];
}

void KnowledgeGraph::write_index(std::ostream& out) const {
    out.write(kIndexMagic, 4);
    write_u32(out, kIndexVersion);
    write_u32(out, static_cast<std::uint32_t>(nodes_.size()));
    write_u32(out, static_cast<std::uint32_t>(relations_.size()));
    write_u32(out, static_cast<std::uint32_t>(edges_.size()));
    for (const auto& n : nodes_) {
        write_str(out, n.node_id);
        write_str(out, n.name);
        write_str(out, n.category);
    }
    for (const auto& r : relations_) write_str(out, r);
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        write_u32(out, edges_[i].first);
        write_u32(out, edges_[i].second);
        write_u32(out, edge_rels_[i]);
    }
}

KnowledgeGraph KnowledgeGraph::read_index(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kIndexMagic, 4) != 0) throw std::runtime_error("not a graph index file");
    std::uint32_t version = read_u32(in);
    if (version != kIndexVersion) {
        throw std::runtime_error("unsupported graph index version " + std::to_string(version));
    }
    std::uint32_t n_nodes = read_u32(in);
    std::uint32_t n_rels = read_u32(in);
    std::uint32_t n_edges = read_u32(in);
    KnowledgeGraph g;
    g.nodes_.reserve(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
        KGNode node;
        node.node_id = read_str(in);
        node.name = read_str(in);
        node.category = read_str(in);
        g.nodes_.push_back(std::move(node));
    }
    g.relations_.reserve(n_rels);
    for (std::uint32_t i = 0; i < n_rels; ++i) g.relations_.push_back(read_str(in));
    g.edges_.reserve(n_edges);
    g.edge_rels_.reserve(n_edges);
    for (std::uint32_t i = 0; i < n_edges; ++i) {
        std::uint32_t u = read_u32(in);
        std::uint32_t v = read_u32(in);
        std::uint32_t r = read_u32(in);
        if (u >= n_nodes || v >= n_nodes || r >= n_rels) throw std::runtime_error("corrupt graph index");
        g.edges_.emplace_back(u, v);
        g.edge_rels_.push_back(r);
    }
    g.finalize();
    return g;
}

}  // namespace kgf
