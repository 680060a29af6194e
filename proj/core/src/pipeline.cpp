#include "kgf/pipeline.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "kgf/hashing.hpp"
#include "kgf/text.hpp"

namespace kgf {

namespace {

std::string numbered_block(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1) + ". " + items[i] + "\n";
    }
    return out;
}

}  // namespace

bool Conversation::has_patient_turn() const {
    return std::any_of(turns.begin(), turns.end(),
                       [](const Turn& t) { return t.speaker == Speaker::Patient; });
}

std::string Conversation::render() const {
    std::string out;
    for (const Turn& t : turns) {
        out += (t.speaker == Speaker::Patient ? "Patient: " : "Doctor: ");
        out += t.text;
        out += '\n';
    }
    return out;
}

const char* channel_name(Channel c) {
    switch (c) {
        case Channel::Pre: return "pre";
        case Channel::EhrKg: return "ehr-kg";
        case Channel::Ddx: return "ddx";
        case Channel::DdxKg: return "ddx-kg";
    }
    return "pre";
}

std::optional<Channel> parse_channel(const std::string& name) {
    if (name == "pre") return Channel::Pre;
    if (name == "ehr-kg") return Channel::EhrKg;
    if (name == "ddx") return Channel::Ddx;
    if (name == "ddx-kg") return Channel::DdxKg;
    return std::nullopt;
}

std::vector<std::string> DiagnosisSet::all() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& list : {best, worst}) {
        for (const auto& d : list) {
            std::string key = normalize_term(d);
            if (seen.insert(key).second) out.push_back(d);
        }
    }
    return out;
}

const char* pipeline_mode_name(PipelineMode m) {
    switch (m) {
        case PipelineMode::Full: return "full";
        case PipelineMode::ZeroShotU: return "zero-shot-u";
        case PipelineMode::ZeroShotK: return "zero-shot-k";
        case PipelineMode::FollowupQ: return "followupq";
    }
    return "full";
}

const char* guidance_source_name(GuidanceSource g) {
    switch (g) {
        case GuidanceSource::IntersectedConcepts: return "intersected-concepts";
        case GuidanceSource::SimilarConcepts: return "similar-concepts";
        case GuidanceSource::TripletRationale: return "triplet-rationale";
    }
    return "intersected-concepts";
}

void PipelineConfig::validate() const {
    if (n_pre < 0 || top_entities < 0 || path_limit < 0 || bfs_depth < 0 || n_best < 0 || n_worst < 0 ||
        questions_per_diagnosis < 0 || icl_shots < 0) {
        throw std::invalid_argument("pipeline counts must be >= 0");
    }
    if (budget < 1) throw std::invalid_argument("budget must be >= 1");
}

std::string render_path(const ReasoningPath& path, const KnowledgeGraph& graph) {
    auto display = [&](const std::string& id) {
        auto node = graph.get_node(id);
        return node ? node->name : id;
    };
    std::string out = display(path.nodes.front());
    for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
        out += " -[" + path.relations[i] + "]-> " + display(path.nodes[i + 1]);
    }
    auto interior = path.interior();
    if (!interior.empty()) {
        std::vector<std::string> names;
        names.reserve(interior.size());
        for (const auto& id : interior) names.push_back(display(id));
        out += "  (critical intermediate: " + join(names, ", ") + ")";
    }
    return out;
}

QuestionPipeline::QuestionPipeline(const KnowledgeGraph* graph, Gateway* gateway, PromptSet prompts,
                                   PipelineConfig config)
    : graph_(graph), gateway_(gateway), prompts_(std::move(prompts)), config_(std::move(config)) {
    if (!gateway_) throw std::invalid_argument("pipeline requires a gateway");
    config_.validate();
    bool needs_graph = config_.mode == PipelineMode::Full && (config_.channel_ehr_kg || config_.channel_ddx_kg);
    if (needs_graph && !graph_) throw std::invalid_argument("this pipeline configuration requires a graph");

    std::string canon = std::to_string(config_.n_pre) + "|" + std::to_string(config_.top_entities) + "|" +
                        std::to_string(config_.path_limit) + "|" + std::to_string(config_.bfs_depth) +
                        "|" + std::to_string(config_.n_best) + "|" + std::to_string(config_.n_worst) +
                        "|" + std::to_string(config_.questions_per_diagnosis) + "|" +
                        std::to_string(config_.icl_shots) + "|" + std::to_string(config_.budget) + "|" +
                        pipeline_mode_name(config_.mode) + "|" + guidance_source_name(config_.guidance) +
                        "|" + std::to_string(config_.sample_paths) + "|" + std::to_string(config_.seed);
    config_hash_ = short_hash(canon);
}

Embedder QuestionPipeline::embedder() const {
    Gateway* gw = gateway_;
    return [gw](const std::vector<std::string>& texts) { return gw->embed(texts); };
}

Completion QuestionPipeline::generate_call(const Conversation& conversation, std::span<const IclShot> icl,
                                           const std::string& knowledge_block,
                                           const std::string& count_instruction) {
    const PromptTemplate& tmpl = prompts_.get(PromptRole::Generate);
    PromptRequest req;
    req.role = PromptRole::Generate;
    req.system_text = tmpl.system_text;
    req.user_text = render_template(tmpl.user_template, {{"conversation", conversation.render()},
                                                         {"knowledge", knowledge_block},
                                                         {"count_instruction", count_instruction}});
    req.icl_examples.assign(icl.begin(), icl.end());
    req.temperature = gateway_->config().temperature_generate;
    req.max_tokens = gateway_->config().max_tokens;
    return gateway_->complete(req);
}

std::vector<FollowupQuestion> QuestionPipeline::preliminary_questions(const Conversation& conversation,
                                                                      std::span<const IclShot> icl,
                                                                      int n_pre, PipelineRunInfo& info) {
    if (n_pre <= 0) return {};
    std::string count = "Generate exactly " + std::to_string(n_pre) + " questions.";
    Completion c = generate_call(conversation, icl, "", count);
    if (!c.parse_ok) {
        info.flags.push_back("pre-unparseable");
        return {};
    }
    std::vector<FollowupQuestion> out;
    out.reserve(c.items.size());
    for (auto& q : c.items) out.push_back(FollowupQuestion{q, Channel::Pre, {}});
    return out;
}

void QuestionPipeline::ensure_extraction(const Conversation& conversation, PipelineRunInfo& info) {
    if (extraction_done_) return;
    extraction_done_ = true;

    const PromptTemplate& tmpl = prompts_.get(PromptRole::Extract);
    PromptRequest req;
    req.role = PromptRole::Extract;
    req.system_text = tmpl.system_text;
    req.user_text = render_template(tmpl.user_template, {{"conversation", conversation.render()}});
    req.temperature = gateway_->config().temperature_analytic;
    req.max_tokens = gateway_->config().max_tokens;

    std::vector<ClinicalEntity> entities;
    try {
        Completion c = gateway_->complete(req);
        info.extracted_entities = c.items;
        entities.reserve(c.items.size());
        for (const auto& item : c.items) entities.push_back(ClinicalEntity::from_surface(item));
    } catch (const GatewayError&) {
        info.flags.push_back("extraction-failed");
        info.hard_case = true;  // conservative: no entities means no traversal
        return;
    }

    if (!graph_) {
        info.hard_case = entities.empty();
        return;
    }
    auto linked = link_all(entities, *graph_, embedder(), config_.linker);
    info.links = std::move(linked.results);
    info.hard_case = linked.hard_case;
}

std::vector<FollowupQuestion> QuestionPipeline::ehr_kg_questions(const Conversation& conversation,
                                                                 std::span<const IclShot> icl,
                                                                 PipelineRunInfo& info) {
    ensure_extraction(conversation, info);
    if (info.hard_case) {
        info.flags.push_back("ehr-kg-hard-case");
        return {};
    }

    // Linked seed nodes, deduplicated, in extraction order.
    std::vector<std::string> seeds;
    std::set<std::string> seen;
    for (const auto& link : info.links) {
        if (link.node_id && seen.insert(*link.node_id).second) seeds.push_back(*link.node_id);
    }
    if (seeds.empty()) {
        info.flags.push_back("ehr-kg-hard-case");
        return {};
    }

    std::string knowledge;
    std::vector<std::string> concept_ids;
    std::vector<std::string> concept_names;

    if (config_.guidance == GuidanceSource::TripletRationale) {
        // Ablation: 1-hop triplets around the linked entities as rationale.
        std::vector<std::string> triplets;
        for (const auto& seed : seeds) {
            const auto& seed_name = graph_->get_node(seed)->name;
            for (const auto& [neighbor, relation] : graph_->neighbors(seed)) {
                triplets.push_back(seed_name + " -[" + relation + "]- " + graph_->get_node(neighbor)->name);
                concept_ids.push_back(neighbor);
                if (triplets.size() >= 30) break;
            }
            if (triplets.size() >= 30) break;
        }
        info.graph_search_calls += seeds.size();
        knowledge = "Rationale from medical knowledge-graph triplets:\n" + numbered_block(triplets);
    } else {
        if (config_.guidance == GuidanceSource::SimilarConcepts) {
            // Ablation: top concepts by embedding similarity, no traversal.
            std::vector<std::string> names(graph_->normalized_names());
            std::vector<std::string> texts;
            texts.reserve(names.size() + seeds.size());
            for (const auto& s : seeds) texts.push_back(graph_->get_node(s)->name);
            for (const auto& n : names) texts.push_back(n);
            auto vectors = gateway_->embed(texts);
            std::vector<std::pair<double, std::string>> scored;
            for (std::size_t i = 0; i < names.size(); ++i) {
                double best = 0.0;
                for (std::size_t s = 0; s < seeds.size(); ++s) {
                    best = std::max(best, cosine(vectors[s], vectors[seeds.size() + i]));
                }
                scored.emplace_back(best, names[i]);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            std::set<std::string> seed_set(seeds.begin(), seeds.end());
            for (const auto& [score, name] : scored) {
                const auto* hits = graph_->lookup_name(name);
                if (!hits) continue;
                const std::string& id = graph_->node(hits->front()).node_id;
                if (seed_set.count(id)) continue;
                concept_ids.push_back(id);
                if (concept_ids.size() >= static_cast<std::size_t>(config_.top_entities) * 2) break;
            }
        } else {
            // Default: depth-bounded subgraphs per entity, intersected.
            std::vector<Subgraph> subgraphs;
            subgraphs.reserve(seeds.size());
            for (const auto& seed : seeds) {
                subgraphs.push_back(bfs_subgraph(*graph_, seed, config_.bfs_depth));
                ++info.graph_search_calls;
            }
            std::set<std::string> intersected = intersect_subgraphs(subgraphs);
            if (intersected.empty()) {
                // Fallback: union of 1-hop neighborhoods, seeds excluded.
                info.ehr_fallback_neighbors = true;
                info.flags.push_back("ehr-kg-neighbor-fallback");
                std::set<std::string> seed_set(seeds.begin(), seeds.end());
                for (const auto& seed : seeds) {
                    for (const auto& [neighbor, relation] : graph_->neighbors(seed)) {
                        if (!seed_set.count(neighbor)) intersected.insert(neighbor);
                    }
                    ++info.graph_search_calls;
                }
            }
            concept_ids.assign(intersected.begin(), intersected.end());
        }
        info.intersected_node_ids = concept_ids;

        if (concept_ids.empty()) {
            info.flags.push_back("ehr-kg-no-concepts");
            return {};
        }

        std::vector<std::string> candidate_names;
        candidate_names.reserve(concept_ids.size());
        for (const auto& id : concept_ids) candidate_names.push_back(graph_->get_node(id)->name);

        // Rank intersected concepts by relevance, keep the top k1.
        const PromptTemplate& rank_tmpl = prompts_.get(PromptRole::RankEntity);
        PromptRequest rank_req;
        rank_req.role = PromptRole::RankEntity;
        rank_req.system_text = rank_tmpl.system_text;
        rank_req.user_text = render_template(rank_tmpl.user_template,
                                             {{"conversation", conversation.render()},
                                              {"candidates", numbered_block(candidate_names)}});
        rank_req.temperature = gateway_->config().temperature_analytic;
        rank_req.max_tokens = gateway_->config().max_tokens;
        Completion ranked = gateway_->complete(rank_req);

        std::vector<std::string> ordered;
        if (ranked.parse_ok) {
            // Map ranked names back to candidates; unmentioned candidates keep
            // their original order after the mapped ones.
            std::map<std::string, std::size_t> by_norm;
            for (std::size_t i = 0; i < candidate_names.size(); ++i) {
                by_norm.emplace(normalize_term(candidate_names[i]), i);
            }
            std::set<std::size_t> used;
            for (const auto& item : ranked.items) {
                auto it = by_norm.find(normalize_term(item));
                if (it != by_norm.end() && used.insert(it->second).second) {
                    ordered.push_back(candidate_names[it->second]);
                }
            }
            for (std::size_t i = 0; i < candidate_names.size(); ++i) {
                if (!used.count(i)) ordered.push_back(candidate_names[i]);
            }
        } else {
            info.flags.push_back("rank-entity-fallback");
            ordered = candidate_names;
        }
        if (ordered.size() > static_cast<std::size_t>(config_.top_entities)) {
            ordered.resize(static_cast<std::size_t>(config_.top_entities));
        }
        concept_names = ordered;
        info.ranked_concepts = concept_names;

        // Keep provenance aligned with the surviving concepts.
        std::set<std::string> kept_names;
        for (const auto& n : concept_names) kept_names.insert(normalize_term(n));
        std::vector<std::string> kept_ids;
        for (const auto& id : concept_ids) {
            if (kept_names.count(normalize_term(graph_->get_node(id)->name))) kept_ids.push_back(id);
        }
        concept_ids = kept_ids;

        knowledge = "Clinically related concepts from the medical knowledge graph (use them to guide "
                    "coverage):\n" +
                    numbered_block(concept_names);
    }

    Completion c = generate_call(conversation, icl, knowledge,
                                 "Ask as many focused questions as the concepts warrant.");
    if (!c.parse_ok) {
        info.flags.push_back("ehr-kg-unparseable");
        return {};
    }
    std::vector<FollowupQuestion> out;
    out.reserve(c.items.size());
    for (auto& q : c.items) out.push_back(FollowupQuestion{q, Channel::EhrKg, concept_ids});
    return out;
}

std::vector<FollowupQuestion> QuestionPipeline::ddx_questions(const Conversation& conversation,
                                                              std::span<const IclShot> icl,
                                                              PipelineRunInfo& info) {
    auto diagnose = [&](PromptRole role, int n) -> std::vector<std::string> {
        if (n == 0) return {};
        const PromptTemplate& tmpl = prompts_.get(role);
        PromptRequest req;
        req.role = role;
        req.system_text = tmpl.system_text;
        req.user_text = render_template(tmpl.user_template, {{"conversation", conversation.render()},
                                                             {"n", std::to_string(n)}});
        req.temperature = gateway_->config().temperature_analytic;
        req.max_tokens = gateway_->config().max_tokens;
        Completion c = gateway_->complete(req);
        if (!c.parse_ok) {
            info.flags.push_back(std::string(prompt_role_name(role)) + "-unparseable");
            return {};
        }
        auto items = c.items;
        if (items.size() > static_cast<std::size_t>(n)) items.resize(static_cast<std::size_t>(n));
        return items;
    };

    info.diagnoses.best = diagnose(PromptRole::DdxBest, config_.n_best);
    info.diagnoses.worst = diagnose(PromptRole::DdxWorst, config_.n_worst);

    std::vector<FollowupQuestion> out;
    for (const auto& diagnosis : info.diagnoses.all()) {
        const PromptTemplate& tmpl = prompts_.get(PromptRole::Eliminate);
        PromptRequest req;
        req.role = PromptRole::Eliminate;
        req.system_text = tmpl.system_text;
        req.user_text = render_template(tmpl.user_template,
                                        {{"conversation", conversation.render()},
                                         {"diagnosis", diagnosis},
                                         {"n", std::to_string(config_.questions_per_diagnosis)}});
        req.icl_examples.assign(icl.begin(), icl.end());
        req.temperature = gateway_->config().temperature_generate;
        req.max_tokens = gateway_->config().max_tokens;
        Completion c = gateway_->complete(req);
        if (!c.parse_ok) {
            info.flags.push_back("eliminate-unparseable:" + diagnosis);
            continue;
        }
        auto items = c.items;
        if (items.size() > static_cast<std::size_t>(config_.questions_per_diagnosis)) {
            items.resize(static_cast<std::size_t>(config_.questions_per_diagnosis));
        }
        for (auto& q : items) out.push_back(FollowupQuestion{q, Channel::Ddx, {diagnosis}});
    }
    return out;
}

std::vector<FollowupQuestion> QuestionPipeline::ddx_kg_questions(const Conversation& conversation,
                                                                 std::span<const IclShot> icl,
                                                                 PipelineRunInfo& info) {
    ensure_extraction(conversation, info);
    if (info.hard_case) {
        info.flags.push_back("ddx-kg-hard-case");
        return {};
    }

    std::vector<std::string> entity_nodes;
    std::set<std::string> seen;
    for (const auto& link : info.links) {
        if (link.node_id && seen.insert(*link.node_id).second) entity_nodes.push_back(*link.node_id);
    }

    // Link each diagnosis with the same linker the entities used.
    std::vector<std::string> diagnosis_nodes;
    auto diagnoses = info.diagnoses.all();
    for (const auto& d : diagnoses) {
        auto result = link_entity(ClinicalEntity::from_surface(d), *graph_, embedder(), config_.linker);
        info.diagnoses.linked[d] = result.node_id;
        if (result.node_id) diagnosis_nodes.push_back(*result.node_id);
    }

    info.selected_paths.clear();
    std::set<std::string> diag_seen;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& e : entity_nodes) {
        for (const auto& d : diagnoses) {
            ++info.pair_count;
            auto linked = info.diagnoses.linked[d];
            if (!linked || *linked == e) {
                ++info.skipped_pairs;
                continue;
            }
            pairs.emplace_back(e, *linked);
        }
    }

    for (const auto& [entity_node, diagnosis_node] : pairs) {
        std::vector<ReasoningPath> candidates;
        std::uint64_t pair_seed =
            mix_seed(config_.seed, conversation.instance_id + "|" + entity_node + "|" + diagnosis_node);
        if (config_.sample_paths) {
            candidates = sample_shortest_paths(*graph_, entity_node, diagnosis_node,
                                               static_cast<std::size_t>(config_.path_limit), pair_seed);
        } else {
            candidates = enumerate_shortest_paths(*graph_, entity_node, diagnosis_node,
                                                  static_cast<std::size_t>(config_.path_limit));
        }
        ++info.graph_search_calls;
        info.enumerated_paths_total += candidates.size();
        if (candidates.empty()) {
            ++info.skipped_pairs;
            continue;
        }

        std::size_t selected = 0;
        if (candidates.size() > 1) {
            std::vector<std::string> rendered;
            rendered.reserve(candidates.size());
            for (const auto& p : candidates) rendered.push_back(render_path(p, *graph_));
            const PromptTemplate& tmpl = prompts_.get(PromptRole::RankPath);
            PromptRequest req;
            req.role = PromptRole::RankPath;
            req.system_text = tmpl.system_text;
            req.user_text = render_template(tmpl.user_template, {{"conversation", conversation.render()},
                                                                 {"paths", numbered_block(rendered)}});
            req.temperature = gateway_->config().temperature_analytic;
            req.max_tokens = gateway_->config().max_tokens;
            Completion c = gateway_->complete(req);
            if (c.parse_ok && c.selected_index >= 0 &&
                c.selected_index < static_cast<int>(candidates.size())) {
                selected = static_cast<std::size_t>(c.selected_index);
            } else {
                info.flags.push_back("rank-path-fallback");
            }
        } else {
            // A single candidate still goes through the ranking call so the
            // selection is uniform; the transcript records one candidate.
            std::vector<std::string> rendered{render_path(candidates[0], *graph_)};
            const PromptTemplate& tmpl = prompts_.get(PromptRole::RankPath);
            PromptRequest req;
            req.role = PromptRole::RankPath;
            req.system_text = tmpl.system_text;
            req.user_text = render_template(tmpl.user_template, {{"conversation", conversation.render()},
                                                                 {"paths", numbered_block(rendered)}});
            req.temperature = gateway_->config().temperature_analytic;
            req.max_tokens = gateway_->config().max_tokens;
            Completion c = gateway_->complete(req);
            if (!c.parse_ok || c.selected_index != 0) info.flags.push_back("rank-path-fallback");
        }
        info.selected_paths.push_back(candidates[selected]);
    }

    if (info.selected_paths.empty()) {
        info.flags.push_back("ddx-kg-no-paths");
        return {};
    }

    std::vector<std::string> rendered;
    std::vector<std::string> provenance;
    rendered.reserve(info.selected_paths.size());
    for (const auto& p : info.selected_paths) {
        rendered.push_back(render_path(p, *graph_));
        provenance.push_back(join(p.nodes, "->"));
    }
    std::string knowledge =
        "Knowledge-graph reasoning paths from the patient's findings to candidate diagnoses:\n" +
        numbered_block(rendered);
    Completion c = generate_call(conversation, icl, knowledge,
                                 "Ask as many focused questions as the paths warrant.");
    if (!c.parse_ok) {
        info.flags.push_back("ddx-kg-unparseable");
        return {};
    }
    std::vector<FollowupQuestion> out;
    out.reserve(c.items.size());
    for (auto& q : c.items) out.push_back(FollowupQuestion{q, Channel::DdxKg, provenance});
    return out;
}

PipelineResult QuestionPipeline::run(const Conversation& conversation, std::span<const IclShot> icl) {
    if (!conversation.has_patient_turn()) {
        throw std::invalid_argument("conversation " + conversation.instance_id + " has no patient turn");
    }
    PipelineResult result;
    PipelineRunInfo& info = result.info;
    extraction_done_ = false;
    result.set.config_hash = config_hash_;

    auto& questions = result.set.questions;

    if (config_.mode == PipelineMode::ZeroShotU || config_.mode == PipelineMode::ZeroShotK) {
        std::string count = config_.mode == PipelineMode::ZeroShotU
                                ? "Generate as many questions as needed to cover the information gaps."
                                : "Generate exactly " + std::to_string(config_.budget) + " questions.";
        Completion c = generate_call(conversation, icl, "", count);
        if (c.parse_ok) {
            for (auto& q : c.items) questions.push_back(FollowupQuestion{q, Channel::Pre, {}});
        } else {
            info.flags.push_back("pre-unparseable");
        }
    } else {
        bool ehr_on = config_.channel_ehr_kg && config_.mode != PipelineMode::FollowupQ;
        bool ddx_kg_on = config_.channel_ddx_kg && config_.mode != PipelineMode::FollowupQ;

        if (config_.channel_pre) {
            auto pre = preliminary_questions(conversation, icl, config_.n_pre, info);
            questions.insert(questions.end(), pre.begin(), pre.end());
        }
        if (ehr_on) {
            auto ehr = ehr_kg_questions(conversation, icl, info);
            questions.insert(questions.end(), ehr.begin(), ehr.end());
        }
        if (config_.channel_ddx) {
            auto ddx = ddx_questions(conversation, icl, info);
            questions.insert(questions.end(), ddx.begin(), ddx.end());
        }
        if (ddx_kg_on) {
            auto ddxkg = ddx_kg_questions(conversation, icl, info);
            questions.insert(questions.end(), ddxkg.begin(), ddxkg.end());
        }
    }

    for (const auto& q : questions) info.channel_counts[channel_name(q.channel)]++;
    return result;
}

}  // namespace kgf
