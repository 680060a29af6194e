#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgf/benchmark.hpp"
#include "kgf/entity_linker.hpp"
#include "kgf/gateway.hpp"
#include "kgf/kg_store.hpp"
#include "kgf/prompts.hpp"

namespace kgf {

enum class Hardness { None, KgHard, SupervisedHard };

struct ICLExample {
    Conversation conversation;
    std::vector<std::pair<std::string, double>> ground_truth;
    Hardness hardness = Hardness::None;
    std::optional<double> source_recall;

    IclShot to_shot() const;
};

enum class PoolStrategy { Random, KgHard, SupervisedHard };

const char* pool_strategy_name(PoolStrategy s);
PoolStrategy parse_pool_strategy(const std::string& name);

struct ICLPool {
    std::vector<ICLExample> examples;
    PoolStrategy strategy = PoolStrategy::Random;
    std::uint64_t seed = 0;
};

class PoolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// True when KG traversal is infeasible for the conversation: extraction
// yields no entities, or none of them link into the graph. An extraction
// failure counts as hard (conservative) and sets *flagged.
bool detect_hard(const Conversation& conversation, const KnowledgeGraph& graph, Gateway& gateway,
                 const PromptSet& prompts, const LinkerConfig& linker, bool* flagged = nullptr);

// kg-hard: hard-flagged dev instances. supervised-hard: dev instances whose
// recorded recall is 0 (recorded_recalls required). random: the whole dev
// set. An empty result raises PoolError suggesting the random fallback.
ICLPool build_pool(const std::vector<BenchmarkInstance>& dev_instances, const KnowledgeGraph* graph,
                   Gateway& gateway, const PromptSet& prompts, const LinkerConfig& linker,
                   PoolStrategy strategy, std::uint64_t seed,
                   const std::map<std::string, double>* recorded_recalls = nullptr);

// Seeded uniform sample without replacement of min(t, pool size) examples.
std::vector<ICLExample> select_examples(const ICLPool& pool, std::size_t t, std::uint64_t seed);

std::vector<IclShot> to_shots(const std::vector<ICLExample>& examples);

// Persisted form: {"strategy", "seed", "example_ids", "config_hash"?};
// hydration re-reads the examples from the dev set by instance id.
void save_pool(const ICLPool& pool, std::ostream& out, const std::string& config_hash = "");
ICLPool load_pool(std::istream& in, const std::vector<BenchmarkInstance>& dev_instances);

}  // namespace kgf
