#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "kgf/consolidation.hpp"
#include "kgf/gateway.hpp"
#include "kgf/pipeline.hpp"

namespace kgf {

struct ProviderConfig {
    std::string kind = "scripted";  // scripted | http
    std::string scripted_dir;
    bool record = false;  // wrap the live provider and capture responses
    HttpProviderConfig http;
};

struct JudgeConfig {
    std::string kind = "deterministic";  // deterministic | llm
    double threshold = 0.85;
};

// Fully resolved run configuration: declarative file plus flag overrides.
// The canonical serialization is hashed and embedded in every output file.
struct RunConfig {
    PipelineConfig pipeline;
    GatewayConfig gateway;
    ProviderConfig provider;
    JudgeConfig judge;
    ConsolidationMode consolidation = ConsolidationMode::ClusterMerge;
    std::string prompts_dir;  // optional per-role template overrides
    std::uint64_t seed = 0;
    int jobs = 1;

    // Input paths participate in the canonical form so equal hashes mean
    // equal inputs-by-path as well as equal parameters.
    std::string kg_path;
    std::string data_path;

    static RunConfig defaults();
    static RunConfig from_json_file(const std::string& path);
    void apply_json(const std::string& json_text);

    std::string canonical_json() const;
    std::string hash() const;

    PromptSet prompt_set() const;
    std::shared_ptr<Provider> make_provider() const;
};

}  // namespace kgf
