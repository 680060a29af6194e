#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgf/entity_linker.hpp"
#include "kgf/gateway.hpp"
#include "kgf/graph_search.hpp"
#include "kgf/kg_store.hpp"
#include "kgf/prompts.hpp"

namespace kgf {

enum class Speaker { Patient, Doctor };

struct Turn {
    Speaker speaker = Speaker::Patient;
    std::string text;
};

struct Conversation {
    std::string instance_id;
    std::vector<Turn> turns;

    bool has_patient_turn() const;
    // Deterministic prompt rendering: "Patient: ...\nDoctor: ..." lines.
    std::string render() const;
};

enum class Channel { Pre, EhrKg, Ddx, DdxKg };

const char* channel_name(Channel c);
std::optional<Channel> parse_channel(const std::string& name);

struct FollowupQuestion {
    std::string text;
    Channel channel = Channel::Pre;
    std::vector<std::string> provenance;  // node ids, path descriptors, diagnosis names
};

struct QuestionSet {
    std::vector<FollowupQuestion> questions;
    std::string config_hash;
};

struct DiagnosisSet {
    std::vector<std::string> best;
    std::vector<std::string> worst;
    std::map<std::string, std::optional<std::string>> linked;  // diagnosis -> node_id

    // Deduplicated union, best first, preserving first-seen order.
    std::vector<std::string> all() const;
};

enum class PipelineMode { Full, ZeroShotU, ZeroShotK, FollowupQ };
enum class GuidanceSource { IntersectedConcepts, SimilarConcepts, TripletRationale };

const char* pipeline_mode_name(PipelineMode m);
const char* guidance_source_name(GuidanceSource g);

struct PipelineConfig {
    int n_pre = 20;                  // preliminary question count
    int top_entities = 10;           // k1: intersected concepts kept after ranking
    int path_limit = 30;             // k2: shortest paths per entity-diagnosis pair
    int bfs_depth = 2;               // subgraph depth
    int n_best = 2;                  // best-case diagnosis count
    int n_worst = 2;                 // worst-case diagnosis count
    int questions_per_diagnosis = 2; // eliminate questions per diagnosis
    int icl_shots = 4;               // t
    int budget = 20;                 // consolidation budget; also the k of zero-shot-k
    PipelineMode mode = PipelineMode::Full;
    bool channel_pre = true;
    bool channel_ehr_kg = true;
    bool channel_ddx = true;
    bool channel_ddx_kg = true;
    GuidanceSource guidance = GuidanceSource::IntersectedConcepts;
    bool sample_paths = false;  // seeded random sampling instead of lexicographic truncation
    std::uint64_t seed = 0;
    LinkerConfig linker;

    void validate() const;  // throws std::invalid_argument
};

// Per-run artifacts and counters surfaced into output metadata and used by
// the acceptance suite.
struct PipelineRunInfo {
    std::vector<std::string> extracted_entities;
    std::vector<LinkResult> links;
    bool hard_case = false;

    std::vector<std::string> intersected_node_ids;
    std::vector<std::string> ranked_concepts;  // top-k1 names fed to generation
    bool ehr_fallback_neighbors = false;

    DiagnosisSet diagnoses;
    std::vector<ReasoningPath> selected_paths;
    std::size_t pair_count = 0;
    std::size_t skipped_pairs = 0;
    std::size_t enumerated_paths_total = 0;
    std::size_t graph_search_calls = 0;  // BFS + path enumerations

    std::map<std::string, std::size_t> channel_counts;  // channel name -> question count
    std::vector<std::string> flags;                     // degraded-path markers
};

struct PipelineResult {
    QuestionSet set;
    PipelineRunInfo info;
};

// Orchestrates the four generation channels and their fixed-order union:
// preliminary, EHR-guided-KG, DDX, DDX-guided-KG. The graph may be null for
// modes that never touch it (zero-shot baselines).
class QuestionPipeline {
public:
    QuestionPipeline(const KnowledgeGraph* graph, Gateway* gateway, PromptSet prompts,
                     PipelineConfig config);

    // ICL shots are selected once per evaluation run by the caller and
    // injected into every question-generating call.
    PipelineResult run(const Conversation& conversation, std::span<const IclShot> icl = {});

    // Channel entry points, exposed for targeted tests.
    std::vector<FollowupQuestion> preliminary_questions(const Conversation& conversation,
                                                        std::span<const IclShot> icl, int n_pre,
                                                        PipelineRunInfo& info);
    std::vector<FollowupQuestion> ehr_kg_questions(const Conversation& conversation,
                                                   std::span<const IclShot> icl, PipelineRunInfo& info);
    std::vector<FollowupQuestion> ddx_questions(const Conversation& conversation,
                                                std::span<const IclShot> icl, PipelineRunInfo& info);
    std::vector<FollowupQuestion> ddx_kg_questions(const Conversation& conversation,
                                                   std::span<const IclShot> icl, PipelineRunInfo& info);

    const PipelineConfig& config() const { return config_; }

private:
    // Shared prelude for the KG channels: extract once, link once.
    void ensure_extraction(const Conversation& conversation, PipelineRunInfo& info);

    Completion generate_call(const Conversation& conversation, std::span<const IclShot> icl,
                             const std::string& knowledge_block, const std::string& count_instruction);
    Embedder embedder() const;

    const KnowledgeGraph* graph_;
    Gateway* gateway_;
    PromptSet prompts_;
    PipelineConfig config_;
    std::string config_hash_;
    bool extraction_done_ = false;
};

std::string render_path(const ReasoningPath& path, const KnowledgeGraph& graph);

}  // namespace kgf
