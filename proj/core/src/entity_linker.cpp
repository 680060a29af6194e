#include "kgf/entity_linker.hpp"

#include <algorithm>

#include "kgf/text.hpp"

namespace kgf {

namespace {

// Smallest node_id among the indices registered for a normalized name.
// Indices follow node_id order, so the first index is the smallest id.
const std::string& smallest_id(const KnowledgeGraph& graph, const std::vector<NodeIndex>& indices) {
    return graph.node(indices.front()).node_id;
}

struct Candidate {
    std::string name;  // normalized node name
    double jaccard;
};

}  // namespace

ClinicalEntity ClinicalEntity::from_surface(std::string surface) {
    ClinicalEntity e;
    e.normalized = normalize_term(surface);
    e.surface = std::move(surface);
    return e;
}

const char* link_method_name(LinkMethod m) {
    switch (m) {
        case LinkMethod::Exact: return "exact";
        case LinkMethod::StringSim: return "string-sim";
        case LinkMethod::EmbeddingSim: return "embedding-sim";
        case LinkMethod::Unlinked: return "unlinked";
    }
    return "unlinked";
}

LinkResult link_entity(const ClinicalEntity& entity, const KnowledgeGraph& graph, const Embedder& embedder,
                       const LinkerConfig& config) {
    LinkResult result;
    result.entity = entity;
    if (entity.normalized.empty()) return result;

    // Stage 1: exact normalized-name match.
    if (const auto* hits = graph.lookup_name(entity.normalized)) {
        result.node_id = smallest_id(graph, *hits);
        result.score = 1.0;
        result.method = LinkMethod::Exact;
        return result;
    }

    // Stage 2: token-set Jaccard over every distinct node name. Names that
    // differ only in token segmentation ("head ache" vs "headache") count as
    // full string matches; token sets alone cannot see them.
    std::string compact_term = entity.normalized;
    compact_term.erase(std::remove(compact_term.begin(), compact_term.end(), ' '), compact_term.end());
    const auto& names = graph.normalized_names();
    std::vector<Candidate> candidates;
    candidates.reserve(names.size());
    double best_jaccard = 0.0;
    for (const auto& name : names) {
        double j = token_jaccard(entity.normalized, name);
        if (j < 1.0 && !compact_term.empty()) {
            std::string compact_name = name;
            compact_name.erase(std::remove(compact_name.begin(), compact_name.end(), ' '),
                               compact_name.end());
            if (compact_name == compact_term) j = 1.0;
        }
        if (j > 0.0) candidates.push_back({name, j});
        best_jaccard = std::max(best_jaccard, j);
    }
    if (best_jaccard >= config.string_threshold) {
        // All nodes whose name hits the best score compete; smallest id wins.
        std::string best_id;
        for (const auto& c : candidates) {
            if (c.jaccard < best_jaccard) continue;
            const auto* hits = graph.lookup_name(c.name);
            const std::string& id = smallest_id(graph, *hits);
            if (best_id.empty() || id < best_id) best_id = id;
        }
        result.node_id = best_id;
        result.score = best_jaccard;
        result.method = LinkMethod::StringSim;
        return result;
    }

    // Stage 3: cosine over the top string candidates. Candidate order is
    // (jaccard desc, name asc) so the cap is deterministic.
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.jaccard != b.jaccard) return a.jaccard > b.jaccard;
        return a.name < b.name;
    });
    if (candidates.size() > config.candidate_cap) candidates.resize(config.candidate_cap);
    if (candidates.empty()) return result;

    std::vector<std::string> texts;
    texts.reserve(candidates.size() + 1);
    texts.push_back(entity.normalized);
    for (const auto& c : candidates) texts.push_back(c.name);
    std::vector<std::vector<double>> vectors;
    try {
        vectors = embedder(texts);
    } catch (const std::exception&) {
        result.degraded = true;  // string-only linking from here on
        return result;
    }
    if (vectors.size() != texts.size()) {
        result.degraded = true;
        return result;
    }

    double best_cos = -1.0;
    std::string best_id;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double c = cosine(vectors[0], vectors[i + 1]);
        const auto* hits = graph.lookup_name(candidates[i].name);
        const std::string& id = smallest_id(graph, *hits);
        if (c > best_cos || (c == best_cos && id < best_id)) {
            best_cos = c;
            best_id = id;
        }
    }
    if (best_cos >= config.embedding_threshold) {
        result.node_id = best_id;
        result.score = std::clamp(best_cos, 0.0, 1.0);
        result.method = LinkMethod::EmbeddingSim;
    }
    return result;
}

LinkAllResult link_all(std::span<const ClinicalEntity> entities, const KnowledgeGraph& graph,
                       const Embedder& embedder, const LinkerConfig& config) {
    LinkAllResult out;
    out.results.reserve(entities.size());
    std::size_t linked = 0;
    for (const auto& e : entities) {
        out.results.push_back(link_entity(e, graph, embedder, config));
        if (out.results.back().node_id) ++linked;
    }
    out.hard_case = linked < std::max<std::size_t>(config.min_links, 1);
    return out;
}

}  // namespace kgf
