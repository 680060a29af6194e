#include "kgf/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "kgf/hashing.hpp"
#include "kgf/text.hpp"

namespace kgf {

using json = nlohmann::json;

namespace {

std::string numbered_block(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1) + ". " + items[i] + "\n";
    }
    return out;
}

}  // namespace

EmbeddingJudge::EmbeddingJudge(Embedder embedder, double threshold)
    : embedder_(std::move(embedder)), threshold_(threshold) {}

std::vector<MatchVerdict> EmbeddingJudge::match(
    const std::vector<std::string>& generated, const std::vector<std::pair<std::string, double>>& truth) {
    std::vector<MatchVerdict> verdicts(truth.size());
    for (std::size_t t = 0; t < truth.size(); ++t) verdicts[t].truth_index = t;
    if (generated.empty() || truth.empty()) return verdicts;

    std::vector<std::string> texts;
    texts.reserve(generated.size() + truth.size());
    for (const auto& g : generated) texts.push_back(g);
    for (const auto& [t, w] : truth) texts.push_back(t);
    auto vectors = embedder_(texts);

    for (std::size_t t = 0; t < truth.size(); ++t) {
        double best = -1.0;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < generated.size(); ++g) {
            double c = cosine(vectors[g], vectors[generated.size() + t]);
            if (c > best) {
                best = c;
                best_g = g;
            }
        }
        if (best >= threshold_) {
            verdicts[t].matched = true;
            verdicts[t].matched_by = best_g;
            std::ostringstream os;
            os << "cosine=" << best;
            verdicts[t].rationale = os.str();
        }
    }
    return verdicts;
}

std::string EmbeddingJudge::identity() const {
    std::ostringstream os;
    os << "embedding-cosine@" << threshold_;
    return os.str();
}

LlmJudge::LlmJudge(Gateway* gateway, PromptSet prompts) : gateway_(gateway), prompts_(std::move(prompts)) {}

std::vector<MatchVerdict> LlmJudge::match(const std::vector<std::string>& generated,
                                          const std::vector<std::pair<std::string, double>>& truth) {
    std::vector<MatchVerdict> verdicts(truth.size());
    for (std::size_t t = 0; t < truth.size(); ++t) verdicts[t].truth_index = t;
    if (generated.empty() || truth.empty()) return verdicts;

    std::vector<std::string> truth_texts;
    truth_texts.reserve(truth.size());
    for (const auto& [t, w] : truth) truth_texts.push_back(t);

    const PromptTemplate& tmpl = prompts_.get(PromptRole::Judge);
    PromptRequest req;
    req.role = PromptRole::Judge;
    req.system_text = tmpl.system_text;
    req.user_text = render_template(tmpl.user_template, {{"generated", numbered_block(generated)},
                                                         {"truth", numbered_block(truth_texts)}});
    req.temperature = gateway_->config().temperature_analytic;
    req.max_tokens = gateway_->config().max_tokens;

    Completion c = gateway_->complete(req);
    if (!c.parse_ok) {
        // Conservative: unmatched verdicts only lower recall.
        for (auto& v : verdicts) v.rationale = "judge-unparseable";
        return verdicts;
    }
    for (const auto& [t, g] : c.match_pairs) {
        if (t < 0 || static_cast<std::size_t>(t) >= truth.size()) continue;
        if (g < 0 || static_cast<std::size_t>(g) >= generated.size()) continue;
        auto& v = verdicts[static_cast<std::size_t>(t)];
        if (!v.matched) {
            v.matched = true;
            v.matched_by = static_cast<std::size_t>(g);
        }
    }
    return verdicts;
}

std::string LlmJudge::identity() const { return "llm-listwise:" + gateway_->config().model; }

double weighted_recall(const std::vector<MatchVerdict>& verdicts,
                       const std::vector<std::pair<std::string, double>>& truth) {
    if (truth.empty()) return 0.0;
    if (verdicts.size() != truth.size()) {
        throw std::invalid_argument("weighted_recall: verdicts not aligned to truth");
    }
    double total = 0.0, matched = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        total += truth[i].second;
        if (verdicts[i].matched) matched += truth[i].second;
    }
    return total == 0.0 ? 0.0 : matched / total;
}

const char* eval_method_name(EvalMethod m) {
    switch (m) {
        case EvalMethod::ZeroShotU: return "zero-shot-u";
        case EvalMethod::ZeroShotK: return "zero-shot-k";
        case EvalMethod::FollowupQ: return "followupq";
        case EvalMethod::KgFollowup: return "kg-followup";
        case EvalMethod::RandomIcl: return "kg-followup+random-icl";
        case EvalMethod::ActiveIcl: return "kg-followup+active-icl";
    }
    return "kg-followup";
}

EvalMethod parse_eval_method(const std::string& name) {
    if (name == "zero-shot-u") return EvalMethod::ZeroShotU;
    if (name == "zero-shot-k") return EvalMethod::ZeroShotK;
    if (name == "followupq") return EvalMethod::FollowupQ;
    if (name == "kg-followup") return EvalMethod::KgFollowup;
    if (name == "random-icl" || name == "kg-followup+random-icl") return EvalMethod::RandomIcl;
    if (name == "active-icl" || name == "kg-followup+active-icl") return EvalMethod::ActiveIcl;
    throw std::invalid_argument("unknown evaluation method: " + name);
}

namespace {

struct MethodPlan {
    PipelineConfig pipeline;
    bool consolidate = false;
    bool wants_pool = false;
};

MethodPlan plan_for(EvalMethod method, const EvalConfig& config) {
    MethodPlan plan;
    plan.pipeline = config.pipeline;
    switch (method) {
        case EvalMethod::ZeroShotU:
            plan.pipeline.mode = PipelineMode::ZeroShotU;
            break;
        case EvalMethod::ZeroShotK:
            plan.pipeline.mode = PipelineMode::ZeroShotK;
            if (config.zero_shot_k > 0) plan.pipeline.budget = config.zero_shot_k;
            break;
        case EvalMethod::FollowupQ:
            plan.pipeline.mode = PipelineMode::FollowupQ;
            plan.consolidate = true;
            break;
        case EvalMethod::KgFollowup:
            plan.pipeline.mode = PipelineMode::Full;
            plan.consolidate = true;
            break;
        case EvalMethod::RandomIcl:
        case EvalMethod::ActiveIcl:
            plan.pipeline.mode = PipelineMode::Full;
            plan.consolidate = true;
            plan.wants_pool = true;
            break;
    }
    return plan;
}

}  // namespace

EvalReport run_benchmark(EvalMethod method, const std::vector<BenchmarkInstance>& instances,
                         const KnowledgeGraph* graph, Gateway& gateway, const PromptSet& prompts,
                         Judge& judge, const EvalConfig& config, const ICLPool* pool) {
    MethodPlan plan = plan_for(method, config);
    if (plan.wants_pool && (!pool || pool->examples.empty())) {
        throw std::invalid_argument(std::string(eval_method_name(method)) +
                                    " requires a non-empty ICL pool");
    }

    // ICL examples are selected once per run and shared by every instance.
    // Evaluation instances never serve as their own examples: pool members
    // whose ids appear in the benchmark are excluded by split identifier.
    std::vector<IclShot> shots;
    if (plan.wants_pool) {
        std::set<std::string> eval_ids;
        for (const auto& inst : instances) eval_ids.insert(inst.instance_id);
        ICLPool disjoint;
        disjoint.strategy = pool->strategy;
        disjoint.seed = pool->seed;
        for (const auto& e : pool->examples) {
            if (!eval_ids.count(e.conversation.instance_id)) disjoint.examples.push_back(e);
        }
        if (disjoint.examples.empty()) {
            throw std::invalid_argument(
                "ICL pool collapses to empty after removing evaluation instances; use a disjoint dev "
                "split");
        }
        shots = to_shots(select_examples(disjoint, static_cast<std::size_t>(plan.pipeline.icl_shots),
                                         config.seed));
    }

    EvalReport report;
    report.method = eval_method_name(method);
    report.judge_identity = judge.identity();
    report.config_hash = config.config_hash;
    report.prompt_hash = prompts.set_hash();
    report.rows.resize(instances.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= instances.size()) break;
            const BenchmarkInstance& inst = instances[i];
            InstanceRow row;
            row.instance_id = inst.instance_id;
            try {
                PipelineConfig pipe_config = plan.pipeline;
                pipe_config.seed = config.seed;
                QuestionPipeline pipeline(graph, &gateway, prompts, pipe_config);
                PipelineResult result = pipeline.run(inst.conversation, shots);
                row.pre_consolidation_count = result.set.questions.size();

                QuestionSet final_set = std::move(result.set);
                if (plan.consolidate) {
                    auto outcome =
                        consolidate(final_set, gateway, prompts, plan.pipeline.budget,
                                    mix_seed(config.seed, inst.instance_id), config.consolidation);
                    final_set = std::move(outcome.set);
                }
                row.generated_count = final_set.questions.size();

                std::vector<std::string> generated;
                generated.reserve(final_set.questions.size());
                for (const auto& q : final_set.questions) generated.push_back(q.text);
                auto verdicts = judge.match(generated, inst.truth);
                row.recall = weighted_recall(verdicts, inst.truth);
            } catch (const std::exception& e) {
                row.failed = true;
                row.error = e.what();
            }
            report.rows[i] = std::move(row);
        }
    };

    int jobs = std::max(config.jobs, 1);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(jobs));
        for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    double recall_sum = 0.0, count_sum = 0.0, pre_sum = 0.0;
    std::map<std::string, std::pair<double, std::size_t>> theme_acc;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& row = report.rows[i];
        if (row.failed) {
            ++report.failures;
            continue;
        }
        ++ok;
        recall_sum += row.recall;
        count_sum += static_cast<double>(row.generated_count);
        pre_sum += static_cast<double>(row.pre_consolidation_count);
        if (instances[i].theme) {
            auto& acc = theme_acc[*instances[i].theme];
            acc.first += row.recall;
            acc.second += 1;
        }
    }
    report.instances = report.rows.size();
    if (ok > 0) {
        report.mean_recall = recall_sum / static_cast<double>(ok);
        report.mean_count = count_sum / static_cast<double>(ok);
        report.mean_pre_count = pre_sum / static_cast<double>(ok);
    }
    for (const auto& [theme, acc] : theme_acc) {
        report.theme_recall[theme] = acc.first / static_cast<double>(acc.second);
    }
    return report;
}

std::string report_to_json(const EvalReport& report) {
    json doc;
    doc["method"] = report.method;
    doc["judge"] = report.judge_identity;
    doc["config_hash"] = report.config_hash;
    doc["prompt_hash"] = report.prompt_hash;
    doc["mean_recall"] = report.mean_recall;
    doc["mean_count"] = report.mean_count;
    doc["mean_pre_consolidation_count"] = report.mean_pre_count;
    doc["instances"] = report.instances;
    doc["failures"] = report.failures;
    json rows = json::array();
    for (const auto& row : report.rows) {
        json r;
        r["instance_id"] = row.instance_id;
        if (row.failed) {
            r["failed"] = true;
            r["error"] = row.error;
        } else {
            r["recall"] = row.recall;
            r["count"] = row.generated_count;
            r["pre_consolidation_count"] = row.pre_consolidation_count;
        }
        rows.push_back(std::move(r));
    }
    doc["rows"] = std::move(rows);
    if (!report.theme_recall.empty()) {
        json themes;
        for (const auto& [theme, recall] : report.theme_recall) themes[theme] = recall;
        doc["theme_recall"] = std::move(themes);
    }
    return doc.dump(2);
}

}  // namespace kgf
