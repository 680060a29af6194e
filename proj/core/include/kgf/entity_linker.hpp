#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgf/kg_store.hpp"

namespace kgf {

struct ClinicalEntity {
    std::string surface;
    std::string normalized;

    static ClinicalEntity from_surface(std::string surface);
};

enum class LinkMethod { Exact, StringSim, EmbeddingSim, Unlinked };

const char* link_method_name(LinkMethod m);

struct LinkResult {
    ClinicalEntity entity;
    std::optional<std::string> node_id;  // absent iff method == Unlinked
    double score = 0.0;                  // in [0, 1]; 1.0 for exact matches
    LinkMethod method = LinkMethod::Unlinked;
    bool degraded = false;  // embedding stage unavailable, string-only linking
};

struct LinkerConfig {
    double string_threshold = 0.6;      // token-set Jaccard acceptance
    double embedding_threshold = 0.75;  // cosine acceptance
    std::size_t candidate_cap = 50;     // string candidates fed to the embedding stage
    std::size_t min_links = 1;          // below this many linked entities a case is hard
};

// Batch text embedder; one vector per input. May throw on provider failure.
using Embedder = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

// Three-stage linking: exact normalized-name match, then token-set Jaccard,
// then cosine over the top string candidates. Ties at any stage resolve to
// the lexicographically smallest node_id. Deterministic for a fixed graph,
// embedder and config. An embedder failure degrades to string-only linking
// and flags the result.
LinkResult link_entity(const ClinicalEntity& entity, const KnowledgeGraph& graph, const Embedder& embedder,
                       const LinkerConfig& config);

struct LinkAllResult {
    std::vector<LinkResult> results;  // input order
    bool hard_case = false;           // fewer than min_links entities linked (or empty input)
};

LinkAllResult link_all(std::span<const ClinicalEntity> entities, const KnowledgeGraph& graph,
                       const Embedder& embedder, const LinkerConfig& config);

}  // namespace kgf
