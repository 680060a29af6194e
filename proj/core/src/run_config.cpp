#include "kgf/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "kgf/hashing.hpp"

namespace kgf {

using json = nlohmann::json;

namespace {

PipelineMode parse_mode(const std::string& name) {
    if (name == "full") return PipelineMode::Full;
    if (name == "zero-shot-u") return PipelineMode::ZeroShotU;
    if (name == "zero-shot-k") return PipelineMode::ZeroShotK;
    if (name == "followupq") return PipelineMode::FollowupQ;
    throw std::invalid_argument("unknown pipeline mode: " + name);
}

GuidanceSource parse_guidance(const std::string& name) {
    if (name == "intersected-concepts") return GuidanceSource::IntersectedConcepts;
    if (name == "similar-concepts") return GuidanceSource::SimilarConcepts;
    if (name == "triplet-rationale") return GuidanceSource::TripletRationale;
    throw std::invalid_argument("unknown guidance source: " + name);
}

ConsolidationMode parse_consolidation(const std::string& name) {
    if (name == "cluster-merge") return ConsolidationMode::ClusterMerge;
    if (name == "llm-selection") return ConsolidationMode::LlmSelection;
    if (name == "off") return ConsolidationMode::Off;
    throw std::invalid_argument("unknown consolidation mode: " + name);
}

}  // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    RunConfig config;
    config.apply_json(buf.str());
    return config;
}

void RunConfig::apply_json(const std::string& json_text) {
    json doc = json::parse(json_text);

    if (doc.contains("pipeline")) {
        const json& p = doc["pipeline"];
        pipeline.n_pre = p.value("n_pre", pipeline.n_pre);
        pipeline.top_entities = p.value("k1", pipeline.top_entities);
        pipeline.path_limit = p.value("k2", pipeline.path_limit);
        pipeline.bfs_depth = p.value("bfs_depth", pipeline.bfs_depth);
        pipeline.n_best = p.value("n_best", pipeline.n_best);
        pipeline.n_worst = p.value("n_worst", pipeline.n_worst);
        pipeline.questions_per_diagnosis =
            p.value("questions_per_diagnosis", pipeline.questions_per_diagnosis);
        pipeline.icl_shots = p.value("icl_shots", pipeline.icl_shots);
        pipeline.budget = p.value("budget", pipeline.budget);
        if (p.contains("mode")) pipeline.mode = parse_mode(p["mode"].get<std::string>());
        if (p.contains("guidance")) pipeline.guidance = parse_guidance(p["guidance"].get<std::string>());
        pipeline.sample_paths = p.value("sample_paths", pipeline.sample_paths);
        if (p.contains("channels")) {
            const json& c = p["channels"];
            pipeline.channel_pre = c.value("pre", pipeline.channel_pre);
            pipeline.channel_ehr_kg = c.value("ehr-kg", pipeline.channel_ehr_kg);
            pipeline.channel_ddx = c.value("ddx", pipeline.channel_ddx);
            pipeline.channel_ddx_kg = c.value("ddx-kg", pipeline.channel_ddx_kg);
        }
    }
    if (doc.contains("linker")) {
        const json& l = doc["linker"];
        pipeline.linker.string_threshold = l.value("string_threshold", pipeline.linker.string_threshold);
        pipeline.linker.embedding_threshold =
            l.value("embedding_threshold", pipeline.linker.embedding_threshold);
        pipeline.linker.candidate_cap = l.value("candidate_cap", pipeline.linker.candidate_cap);
        pipeline.linker.min_links = l.value("min_links", pipeline.linker.min_links);
    }
    if (doc.contains("gateway")) {
        const json& g = doc["gateway"];
        gateway.model = g.value("model", gateway.model);
        gateway.retries = g.value("retries", gateway.retries);
        gateway.reparse_attempts = g.value("reparse_attempts", gateway.reparse_attempts);
        gateway.cache_enabled = g.value("cache", gateway.cache_enabled);
        gateway.cache_dir = g.value("cache_dir", gateway.cache_dir);
        gateway.max_in_flight = g.value("max_in_flight", gateway.max_in_flight);
        gateway.max_tokens = g.value("max_tokens", gateway.max_tokens);
        gateway.temperature_generate = g.value("temperature_generate", gateway.temperature_generate);
        gateway.temperature_analytic = g.value("temperature_analytic", gateway.temperature_analytic);
        gateway.embed_dim = g.value("embed_dim", gateway.embed_dim);
        if (g.contains("role_models")) {
            for (const auto& [role, model] : g["role_models"].items()) {
                gateway.role_models[role] = model.get<std::string>();
            }
        }
    }
    if (doc.contains("provider")) {
        const json& p = doc["provider"];
        provider.kind = p.value("kind", provider.kind);
        provider.scripted_dir = p.value("scripted_dir", provider.scripted_dir);
        provider.record = p.value("record", provider.record);
        provider.http.endpoint = p.value("endpoint", provider.http.endpoint);
        provider.http.completion_path = p.value("completion_path", provider.http.completion_path);
        provider.http.embedding_path = p.value("embedding_path", provider.http.embedding_path);
        provider.http.style = p.value("style", provider.http.style);
        provider.http.model = p.value("model", provider.http.model);
        provider.http.embedding_model = p.value("embedding_model", provider.http.embedding_model);
        provider.http.timeout_seconds = p.value("timeout_seconds", provider.http.timeout_seconds);
    }
    if (doc.contains("judge")) {
        const json& j = doc["judge"];
        judge.kind = j.value("kind", judge.kind);
        judge.threshold = j.value("threshold", judge.threshold);
    }
    if (doc.contains("consolidation")) {
        consolidation = parse_consolidation(doc["consolidation"].get<std::string>());
    }
    prompts_dir = doc.value("prompts_dir", prompts_dir);
    seed = doc.value("seed", seed);
    jobs = doc.value("jobs", jobs);
}

std::string RunConfig::canonical_json() const {
    json doc;
    doc["pipeline"] = {
        {"n_pre", pipeline.n_pre},
        {"k1", pipeline.top_entities},
        {"k2", pipeline.path_limit},
        {"bfs_depth", pipeline.bfs_depth},
        {"n_best", pipeline.n_best},
        {"n_worst", pipeline.n_worst},
        {"questions_per_diagnosis", pipeline.questions_per_diagnosis},
        {"icl_shots", pipeline.icl_shots},
        {"budget", pipeline.budget},
        {"mode", pipeline_mode_name(pipeline.mode)},
        {"guidance", guidance_source_name(pipeline.guidance)},
        {"sample_paths", pipeline.sample_paths},
        {"channels",
         {{"pre", pipeline.channel_pre},
          {"ehr-kg", pipeline.channel_ehr_kg},
          {"ddx", pipeline.channel_ddx},
          {"ddx-kg", pipeline.channel_ddx_kg}}},
    };
    doc["linker"] = {
        {"string_threshold", pipeline.linker.string_threshold},
        {"embedding_threshold", pipeline.linker.embedding_threshold},
        {"candidate_cap", pipeline.linker.candidate_cap},
        {"min_links", pipeline.linker.min_links},
    };
    doc["gateway"] = {
        {"model", gateway.model},          {"role_models", gateway.role_models},
        {"retries", gateway.retries},      {"reparse_attempts", gateway.reparse_attempts},
        {"cache", gateway.cache_enabled},  {"max_in_flight", gateway.max_in_flight},
        {"max_tokens", gateway.max_tokens}, {"temperature_generate", gateway.temperature_generate},
        {"temperature_analytic", gateway.temperature_analytic}, {"embed_dim", gateway.embed_dim},
    };
    doc["provider"] = {
        {"kind", provider.kind},
        {"scripted_dir", provider.scripted_dir},
        {"record", provider.record},
        {"endpoint", provider.http.endpoint},
        {"style", provider.http.style},
        {"model", provider.http.model},
        {"embedding_model", provider.http.embedding_model},
    };
    doc["judge"] = {{"kind", judge.kind}, {"threshold", judge.threshold}};
    doc["consolidation"] = consolidation_mode_name(consolidation);
    doc["prompts_dir"] = prompts_dir;
    doc["seed"] = seed;
    doc["inputs"] = {{"kg", kg_path}, {"data", data_path}};
    return doc.dump();
}

std::string RunConfig::hash() const { return short_hash(canonical_json()); }

PromptSet RunConfig::prompt_set() const {
    return prompts_dir.empty() ? PromptSet::defaults() : PromptSet::from_directory(prompts_dir);
}

std::shared_ptr<Provider> RunConfig::make_provider() const {
    if (provider.kind == "scripted") {
        if (provider.scripted_dir.empty()) {
            throw std::runtime_error("scripted provider requires provider.scripted_dir");
        }
        return std::make_shared<ScriptedProvider>(provider.scripted_dir, gateway.embed_dim);
    }
    if (provider.kind == "http") {
        if (provider.http.api_key.empty() && std::getenv("KGF_API_KEY") == nullptr) {
            throw std::runtime_error("http provider needs an API key: set KGF_API_KEY");
        }
        auto live = std::make_shared<HttpProvider>(provider.http);
        if (provider.record) {
            if (provider.scripted_dir.empty()) {
                throw std::runtime_error("recording mode requires provider.scripted_dir");
            }
            return std::make_shared<RecordingProvider>(live, provider.scripted_dir);
        }
        return live;
    }
    throw std::runtime_error("unknown provider kind: " + provider.kind);
}

}  // namespace kgf
