#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgf/prompts.hpp"

namespace kgf {

// One in-context example: a conversation and its good follow-up questions.
struct IclShot {
    std::string conversation;
    std::vector<std::string> questions;
};

struct PromptRequest {
    PromptRole role = PromptRole::Generate;
    std::string system_text;
    std::string user_text;
    std::vector<IclShot> icl_examples;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string model;  // resolved by the gateway from its config
};

// Parsed provider output. The payload field that applies depends on the role:
// items for list-shaped roles (extract, generate, rank-entity, ddx-*,
// eliminate, merge), selected_index for rank-path, match_pairs for judge.
struct Completion {
    PromptRole role = PromptRole::Generate;
    std::string raw_text;
    bool parse_ok = false;
    std::vector<std::string> items;
    int selected_index = -1;                         // 0-based; -1 when absent
    std::vector<std::pair<int, int>> match_pairs;    // (truth idx, generated idx), 0-based
    std::string model;
    std::string request_hash;
};

// Transport failure inside a provider; the gateway retries these.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when retries are exhausted or the gateway is misconfigured.
class GatewayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Provider boundary. complete_text returns the raw model text for a request;
// embed returns one vector per input text. Implementations must be safe for
// concurrent calls.
class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string complete_text(const PromptRequest& request) = 0;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string name() const = 0;
};

// Deterministic replay provider. Responses are looked up by request hash
// first (the recording format: one <hash>.txt per response), then by ordered
// substring rules from rules.json, so fixtures can key canned responses on
// conversation markers without precomputing hashes.
class ScriptedProvider : public Provider {
public:
    ScriptedProvider() = default;
    explicit ScriptedProvider(const std::string& directory, std::size_t embed_dim = 256);

    // Registers a canned response for the exact request (test setup only;
    // not thread-safe against concurrent complete_text).
    void script(const PromptRequest& request, std::string response);

    struct Rule {
        std::string role;                   // empty = any role
        std::vector<std::string> contains;  // all must appear in the user text
        std::string response;
    };
    void add_rule(Rule rule);

    std::string complete_text(const PromptRequest& request) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::string name() const override { return "scripted"; }

private:
    std::map<std::string, std::string> by_hash_;
    std::vector<Rule> rules_;
    std::size_t embed_dim_ = 256;
};

// Wraps a live provider and captures every response into a scripted
// directory as <hash>.txt for later offline replay.
class RecordingProvider : public Provider {
public:
    RecordingProvider(std::shared_ptr<Provider> inner, std::string directory);

    std::string complete_text(const PromptRequest& request) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::string name() const override;

private:
    std::shared_ptr<Provider> inner_;
    std::string directory_;
    std::mutex mu_;
};

struct HttpProviderConfig {
    std::string endpoint = "https://api.anthropic.com";
    std::string completion_path = "/v1/messages";
    std::string embedding_path = "/v1/embeddings";
    std::string style = "anthropic";  // or "openai"
    std::string model = "claude-haiku";
    std::string embedding_model;
    std::string api_key;  // defaults to $KGF_API_KEY
    int timeout_seconds = 60;
};

// Messages-style HTTP chat-completion client.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config);

    std::string complete_text(const PromptRequest& request) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::string name() const override { return "http:" + config_.model; }

private:
    HttpProviderConfig config_;
};

// Deterministic bag-of-words embedding stub: tokens hash into fixed-dim
// buckets, then L2 normalization. Token order does not matter.
std::vector<double> hash_embed(const std::string& text, std::size_t dim);

struct GatewayConfig {
    std::string model = "scripted";
    std::map<std::string, std::string> role_models;  // role name -> model override
    int retries = 2;                                 // transport retries
    int reparse_attempts = 1;                        // reformulation retries for generate roles
    bool cache_enabled = false;
    std::string cache_dir;
    int max_in_flight = 8;
    int max_tokens = 1024;
    double temperature_generate = 0.7;
    double temperature_analytic = 0.0;
    std::size_t embed_dim = 256;  // stub embedder dimension
};

// One transcript entry per completed gateway call.
struct CallRecord {
    PromptRole role;
    std::string request_hash;
    std::size_t icl_count = 0;
    bool cache_hit = false;
    bool parse_ok = false;
    std::string user_text;
};

// Single boundary to language-model and embedding providers: resolves decode
// parameters, hashes and caches requests, retries transport failures,
// parses role-specific payloads, and keeps a transcript. Shareable across
// concurrent callers; in-flight provider calls are bounded by config.
class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider, GatewayConfig config);

    Completion complete(PromptRequest request);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

    std::vector<CallRecord> transcript() const;
    void clear_transcript();

    const GatewayConfig& config() const { return config_; }
    std::string provider_name() const { return provider_->name(); }

    // Canonical content hash of a request; the scripted-provider and cache key.
    static std::string request_hash(const PromptRequest& request);

    // Renders ICL examples and the task into the final user message exactly
    // as providers see it.
    static std::string render_user_message(const PromptRequest& request);

    // --- response parsers (exposed for tests and fixtures) ---

    // Numbered/bulleted lines ending in '?'; falls back to bare lines ending
    // in '?' when no list markers exist; a leading JSON array is the strict
    // schema mode. Empty items are dropped, order preserved.
    static std::vector<std::string> parse_questions(const std::string& raw);

    // List items without the question-mark requirement (entities, diagnoses,
    // ranked concept names). "NONE" parses to the empty list.
    static std::vector<std::string> parse_list_items(const std::string& raw);

    // First integer in the text, 1-based -> 0-based; -1 when absent.
    static int parse_selection_index(const std::string& raw);

    // Judge pairs from {"matches": [{"truth": t, "generated": g}, ...]}
    // (1-based in the wire format). Returns std::nullopt when unparseable.
    static std::optional<std::vector<std::pair<int, int>>> parse_match_pairs(const std::string& raw);

private:
    Completion parse_completion(PromptRole role, const std::string& raw) const;
    std::string call_provider(const PromptRequest& request);

    std::shared_ptr<Provider> provider_;
    GatewayConfig config_;

    mutable std::mutex transcript_mu_;
    std::vector<CallRecord> transcript_;

    std::mutex cache_mu_;

    // Bounded in-flight gate.
    std::mutex gate_mu_;
    std::condition_variable gate_cv_;
    int in_flight_ = 0;
};

}  // namespace kgf
