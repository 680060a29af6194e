#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgf/active_icl.hpp"
#include "kgf/benchmark.hpp"
#include "kgf/consolidation.hpp"
#include "kgf/gateway.hpp"
#include "kgf/pipeline.hpp"

namespace kgf {

struct MatchVerdict {
    std::size_t truth_index = 0;
    bool matched = false;
    std::optional<std::size_t> matched_by;  // generated-question index
    std::string rationale;
};

// Matches generated questions against a ground-truth set; one verdict per
// truth entry. A truth question may be covered by any generated question, and
// one generated question may cover several truth questions.
class Judge {
public:
    virtual ~Judge() = default;
    virtual std::vector<MatchVerdict> match(const std::vector<std::string>& generated,
                                            const std::vector<std::pair<std::string, double>>& truth) = 0;
    virtual std::string identity() const = 0;
};

// Deterministic offline judge: a truth question is matched when its maximum
// cosine similarity against the generated set reaches the threshold.
class EmbeddingJudge : public Judge {
public:
    EmbeddingJudge(Embedder embedder, double threshold = 0.85);

    std::vector<MatchVerdict> match(const std::vector<std::string>& generated,
                                    const std::vector<std::pair<std::string, double>>& truth) override;
    std::string identity() const override;

private:
    Embedder embedder_;
    double threshold_;
};

// List-wise LLM judge. Unparseable responses degrade to no-match verdicts
// (conservative: they can only lower recall) and are flagged in rationales.
class LlmJudge : public Judge {
public:
    LlmJudge(Gateway* gateway, PromptSet prompts);

    std::vector<MatchVerdict> match(const std::vector<std::string>& generated,
                                    const std::vector<std::pair<std::string, double>>& truth) override;
    std::string identity() const override;

private:
    Gateway* gateway_;
    PromptSet prompts_;
};

// Matched truth-weight mass over total truth-weight mass.
double weighted_recall(const std::vector<MatchVerdict>& verdicts,
                       const std::vector<std::pair<std::string, double>>& truth);

enum class EvalMethod { ZeroShotU, ZeroShotK, FollowupQ, KgFollowup, RandomIcl, ActiveIcl };

const char* eval_method_name(EvalMethod m);
EvalMethod parse_eval_method(const std::string& name);

struct EvalConfig {
    PipelineConfig pipeline;
    ConsolidationMode consolidation = ConsolidationMode::ClusterMerge;
    int zero_shot_k = 0;  // question count for zero-shot-k; 0 = use pipeline.budget
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string config_hash;  // provenance stamp copied into the report
};

struct InstanceRow {
    std::string instance_id;
    double recall = 0.0;
    std::size_t generated_count = 0;
    std::size_t pre_consolidation_count = 0;
    bool failed = false;
    std::string error;
};

struct EvalReport {
    std::string method;
    std::string judge_identity;
    std::string config_hash;
    std::string prompt_hash;
    double mean_recall = 0.0;
    double mean_count = 0.0;       // post-consolidation
    double mean_pre_count = 0.0;   // pre-consolidation
    std::size_t instances = 0;
    std::size_t failures = 0;
    std::vector<InstanceRow> rows;
    std::map<std::string, double> theme_recall;  // present when instances carry themes
};

std::string report_to_json(const EvalReport& report);

// Executes one method over the benchmark, consolidating where the method
// specifies a budget, matching with the judge, and aggregating mean weighted
// recall and mean question count. Per-instance failures are recorded and
// excluded from the means. Deterministic (bit-for-bit) with a scripted
// provider and the embedding judge, independent of the job count.
EvalReport run_benchmark(EvalMethod method, const std::vector<BenchmarkInstance>& instances,
                         const KnowledgeGraph* graph, Gateway& gateway, const PromptSet& prompts,
                         Judge& judge, const EvalConfig& config, const ICLPool* pool = nullptr);

}  // namespace kgf
