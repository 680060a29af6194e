#include "kgf/active_icl.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace kgf {

using json = nlohmann::json;

IclShot ICLExample::to_shot() const {
    IclShot shot;
    shot.conversation = conversation.render();
    shot.questions.reserve(ground_truth.size());
    for (const auto& [text, weight] : ground_truth) shot.questions.push_back(text);
    return shot;
}

const char* pool_strategy_name(PoolStrategy s) {
    switch (s) {
        case PoolStrategy::Random: return "random";
        case PoolStrategy::KgHard: return "kg-hard";
        case PoolStrategy::SupervisedHard: return "supervised-hard";
    }
    return "random";
}

PoolStrategy parse_pool_strategy(const std::string& name) {
    if (name == "random") return PoolStrategy::Random;
    if (name == "kg-hard") return PoolStrategy::KgHard;
    if (name == "supervised-hard") return PoolStrategy::SupervisedHard;
    throw std::invalid_argument("unknown pool strategy: " + name);
}

bool detect_hard(const Conversation& conversation, const KnowledgeGraph& graph, Gateway& gateway,
                 const PromptSet& prompts, const LinkerConfig& linker, bool* flagged) {
    if (flagged) *flagged = false;

    const PromptTemplate& tmpl = prompts.get(PromptRole::Extract);
    PromptRequest req;
    req.role = PromptRole::Extract;
    req.system_text = tmpl.system_text;
    req.user_text = render_template(tmpl.user_template, {{"conversation", conversation.render()}});
    req.temperature = gateway.config().temperature_analytic;
    req.max_tokens = gateway.config().max_tokens;

    std::vector<ClinicalEntity> entities;
    try {
        Completion c = gateway.complete(req);
        for (const auto& item : c.items) entities.push_back(ClinicalEntity::from_surface(item));
    } catch (const GatewayError&) {
        if (flagged) *flagged = true;
        return true;  // cannot extract -> treat as hard
    }
    if (entities.empty()) return true;

    Embedder embedder = [&gateway](const std::vector<std::string>& texts) {
        return gateway.embed(texts);
    };
    return link_all(entities, graph, embedder, linker).hard_case;
}

ICLPool build_pool(const std::vector<BenchmarkInstance>& dev_instances, const KnowledgeGraph* graph,
                   Gateway& gateway, const PromptSet& prompts, const LinkerConfig& linker,
                   PoolStrategy strategy, std::uint64_t seed,
                   const std::map<std::string, double>* recorded_recalls) {
    if (dev_instances.empty()) throw PoolError("dev set is empty");

    ICLPool pool;
    pool.strategy = strategy;
    pool.seed = seed;

    for (const auto& inst : dev_instances) {
        ICLExample example;
        example.conversation = inst.conversation;
        example.ground_truth = inst.truth;

        switch (strategy) {
            case PoolStrategy::Random:
                pool.examples.push_back(std::move(example));
                break;
            case PoolStrategy::KgHard: {
                if (!graph) throw PoolError("kg-hard strategy requires a knowledge graph");
                if (detect_hard(inst.conversation, *graph, gateway, prompts, linker)) {
                    example.hardness = Hardness::KgHard;
                    pool.examples.push_back(std::move(example));
                }
                break;
            }
            case PoolStrategy::SupervisedHard: {
                if (!recorded_recalls) {
                    throw PoolError(
                        "supervised-hard strategy requires recorded per-instance recalls from a prior "
                        "evaluation report");
                }
                auto it = recorded_recalls->find(inst.instance_id);
                if (it == recorded_recalls->end()) {
                    throw PoolError("no recorded recall for dev instance " + inst.instance_id);
                }
                if (it->second == 0.0) {
                    example.hardness = Hardness::SupervisedHard;
                    example.source_recall = it->second;
                    pool.examples.push_back(std::move(example));
                }
                break;
            }
        }
    }

    if (pool.examples.empty()) {
        throw PoolError(std::string("strategy '") + pool_strategy_name(strategy) +
                        "' produced an empty pool; fall back to --strategy random");
    }
    return pool;
}

std::vector<ICLExample> select_examples(const ICLPool& pool, std::size_t t, std::uint64_t seed) {
    std::size_t n = std::min(t, pool.examples.size());
    if (n == 0) return {};
    std::vector<std::size_t> order(pool.examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, order.size() - 1);
        std::swap(order[i], order[d(rng)]);
    }
    std::vector<ICLExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool.examples[order[i]]);
    return out;
}

std::vector<IclShot> to_shots(const std::vector<ICLExample>& examples) {
    std::vector<IclShot> shots;
    shots.reserve(examples.size());
    for (const auto& e : examples) shots.push_back(e.to_shot());
    return shots;
}

void save_pool(const ICLPool& pool, std::ostream& out, const std::string& config_hash) {
    json doc;
    doc["strategy"] = pool_strategy_name(pool.strategy);
    doc["seed"] = pool.seed;
    json ids = json::array();
    for (const auto& e : pool.examples) ids.push_back(e.conversation.instance_id);
    doc["example_ids"] = std::move(ids);
    if (!config_hash.empty()) doc["config_hash"] = config_hash;
    out << doc.dump(2) << "\n";
}

ICLPool load_pool(std::istream& in, const std::vector<BenchmarkInstance>& dev_instances) {
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw PoolError("malformed pool file");
    ICLPool pool;
    pool.strategy = parse_pool_strategy(doc.at("strategy").get<std::string>());
    pool.seed = doc.value("seed", 0ull);

    std::map<std::string, const BenchmarkInstance*> by_id;
    for (const auto& inst : dev_instances) by_id[inst.instance_id] = &inst;
    for (const auto& id : doc.at("example_ids")) {
        auto it = by_id.find(id.get<std::string>());
        if (it == by_id.end()) {
            throw PoolError("pool references unknown dev instance " + id.get<std::string>());
        }
        ICLExample example;
        example.conversation = it->second->conversation;
        example.ground_truth = it->second->truth;
        if (pool.strategy == PoolStrategy::KgHard) example.hardness = Hardness::KgHard;
        if (pool.strategy == PoolStrategy::SupervisedHard) example.hardness = Hardness::SupervisedHard;
        pool.examples.push_back(std::move(example));
    }
    if (pool.examples.empty()) throw PoolError("pool file contains no examples");
    return pool;
}

}  // namespace kgf
