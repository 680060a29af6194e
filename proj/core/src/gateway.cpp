#include "kgf/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "kgf/hashing.hpp"
#include "kgf/text.hpp"

namespace kgf {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scripted provider
// ---------------------------------------------------------------------------

ScriptedProvider::ScriptedProvider(const std::string& directory, std::size_t embed_dim)
    : embed_dim_(embed_dim) {
    if (directory.empty()) return;
    if (!fs::exists(directory)) throw std::runtime_error("scripted directory not found: " + directory);
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (!entry.is_regular_file()) continue;
        const fs::path& p = entry.path();
        if (p.extension() == ".txt") {
            std::ifstream in(p);
            std::stringstream buf;
            buf << in.rdbuf();
            by_hash_[p.stem().string()] = buf.str();
        }
    }
    fs::path rules_file = fs::path(directory) / "rules.json";
    if (fs::exists(rules_file)) {
        std::ifstream in(rules_file);
        json doc = json::parse(in);
        for (const auto& item : doc) {
            Rule rule;
            rule.role = item.value("role", "");
            if (item.contains("contains")) {
                if (item["contains"].is_string()) {
                    rule.contains.push_back(item["contains"].get<std::string>());
                } else {
                    for (const auto& c : item["contains"]) rule.contains.push_back(c.get<std::string>());
                }
            }
            if (item.contains("response_file")) {
                std::ifstream rf(fs::path(directory) / item["response_file"].get<std::string>());
                if (!rf) {
                    throw std::runtime_error("missing scripted response file: " +
                                             item["response_file"].get<std::string>());
                }
                std::stringstream buf;
                buf << rf.rdbuf();
                rule.response = buf.str();
            } else {
                rule.response = item.value("response", "");
            }
            rules_.push_back(std::move(rule));
        }
    }
}

void ScriptedProvider::script(const PromptRequest& request, std::string response) {
    by_hash_[Gateway::request_hash(request)] = std::move(response);
}

void ScriptedProvider::add_rule(Rule rule) { rules_.push_back(std::move(rule)); }

std::string ScriptedProvider::complete_text(const PromptRequest& request) {
    auto it = by_hash_.find(Gateway::request_hash(request));
    if (it != by_hash_.end()) return it->second;
    const std::string rendered = Gateway::render_user_message(request);
    for (const auto& rule : rules_) {
        if (!rule.role.empty() && rule.role != prompt_role_name(request.role)) continue;
        bool hit = true;
        for (const auto& needle : rule.contains) {
            if (rendered.find(needle) == std::string::npos) {
                hit = false;
                break;
            }
        }
        if (hit) return rule.response;
    }
    throw TransportError(std::string("no scripted response for role ") + prompt_role_name(request.role) +
                         " hash " + Gateway::request_hash(request));
}

std::vector<std::vector<double>> ScriptedProvider::embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embed(t, embed_dim_));
    return out;
}

// ---------------------------------------------------------------------------
// Recording provider
// ---------------------------------------------------------------------------

RecordingProvider::RecordingProvider(std::shared_ptr<Provider> inner, std::string directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
    fs::create_directories(directory_);
}

std::string RecordingProvider::complete_text(const PromptRequest& request) {
    std::string response = inner_->complete_text(request);
    std::lock_guard<std::mutex> lock(mu_);
    std::ofstream out(fs::path(directory_) / (Gateway::request_hash(request) + ".txt"));
    out << response;
    return response;
}

std::vector<std::vector<double>> RecordingProvider::embed(const std::vector<std::string>& texts) {
    return inner_->embed(texts);
}

std::string RecordingProvider::name() const { return inner_->name() + "+record"; }

// ---------------------------------------------------------------------------
// HTTP provider (messages-style chat completion)
// ---------------------------------------------------------------------------

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    if (config_.api_key.empty()) {
        if (const char* key = std::getenv("KGF_API_KEY")) config_.api_key = key;
    }
}

std::string HttpProvider::complete_text(const PromptRequest& request) {
    if (config_.api_key.empty()) {
        throw GatewayError("no API key: set KGF_API_KEY or provider.api_key");
    }
    json body;
    body["model"] = request.model.empty() ? config_.model : request.model;
    body["max_tokens"] = request.max_tokens;
    body["temperature"] = request.temperature;
    const std::string user = Gateway::render_user_message(request);

    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);

    httplib::Headers headers;
    if (config_.style == "anthropic") {
        body["system"] = request.system_text;
        body["messages"] = json::array({{{"role", "user"}, {"content", user}}});
        headers = {{"x-api-key", config_.api_key}, {"anthropic-version", "2023-06-01"}};
    } else {
        body["messages"] = json::array({{{"role", "system"}, {"content", request.system_text}},
                                        {{"role", "user"}, {"content", user}}});
        headers = {{"Authorization", "Bearer " + config_.api_key}};
    }

    auto result = client.Post(config_.completion_path, headers, body.dump(), "application/json");
    if (!result) throw TransportError("http request failed: " + httplib::to_string(result.error()));
    if (result->status != 200) {
        throw TransportError("provider returned status " + std::to_string(result->status) + ": " +
                             result->body);
    }
    try {
        json doc = json::parse(result->body);
        if (config_.style == "anthropic") {
            return doc.at("content").at(0).at("text").get<std::string>();
        }
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed provider response: ") + e.what());
    }
}

std::vector<std::vector<double>> HttpProvider::embed(const std::vector<std::string>& texts) {
    if (config_.embedding_model.empty()) {
        throw GatewayError("http provider has no embedding_model configured");
    }
    json body;
    body["model"] = config_.embedding_model;
    body["input"] = texts;
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
    auto result = client.Post(config_.embedding_path, headers, body.dump(), "application/json");
    if (!result) throw TransportError("http request failed: " + httplib::to_string(result.error()));
    if (result->status != 200) {
        throw TransportError("embedding endpoint returned status " + std::to_string(result->status));
    }
    try {
        json doc = json::parse(result->body);
        std::vector<std::vector<double>> out;
        for (const auto& item : doc.at("data")) {
            out.push_back(item.at("embedding").get<std::vector<double>>());
        }
        if (out.size() != texts.size()) throw TransportError("embedding count mismatch");
        return out;
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed embedding response: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Stub embedder
// ---------------------------------------------------------------------------

std::vector<double> hash_embed(const std::string& text, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    for (const auto& token : tokenize(normalize_term(text))) {
        v[fnv1a64(token) % dim] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayConfig config)
    : provider_(std::move(provider)), config_(std::move(config)) {
    if (!provider_) throw GatewayError("gateway requires a provider");
}

std::string Gateway::request_hash(const PromptRequest& request) {
    json canon;
    canon["role"] = prompt_role_name(request.role);
    canon["model"] = request.model;
    canon["system"] = request.system_text;
    canon["user"] = request.user_text;
    json icl = json::array();
    for (const auto& shot : request.icl_examples) {
        icl.push_back({{"conversation", shot.conversation}, {"questions", shot.questions}});
    }
    canon["icl"] = std::move(icl);
    canon["temperature"] = request.temperature;
    canon["max_tokens"] = request.max_tokens;
    return short_hash(canon.dump());
}

std::string Gateway::render_user_message(const PromptRequest& request) {
    if (request.icl_examples.empty()) return request.user_text;
    std::string out = "Worked examples of conversations with good follow-up questions:\n";
    for (std::size_t i = 0; i < request.icl_examples.size(); ++i) {
        const auto& shot = request.icl_examples[i];
        out += "\nExample " + std::to_string(i + 1) + "\nConversation:\n" + shot.conversation +
               "\nFollow-up questions:\n";
        for (std::size_t q = 0; q < shot.questions.size(); ++q) {
            out += std::to_string(q + 1) + ". " + shot.questions[q] + "\n";
        }
    }
    out += "\n---\n\n" + request.user_text;
    return out;
}

namespace {

// Strips a list marker ("1. ", "2) ", "- ", "* ") from a line; returns
// whether one was present.
bool strip_marker(std::string& line) {
    std::string t = trim(line);
    std::size_t i = 0;
    bool digits = false;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) {
        ++i;
        digits = true;
    }
    if (digits && i < t.size() && (t[i] == '.' || t[i] == ')' || t[i] == ':')) {
        line = trim(t.substr(i + 1));
        return true;
    }
    if (!t.empty() && (t[0] == '-' || t[0] == '*')) {
        line = trim(t.substr(1));
        return true;
    }
    // UTF-8 bullet
    if (t.size() >= 3 && static_cast<unsigned char>(t[0]) == 0xe2 &&
        static_cast<unsigned char>(t[1]) == 0x80 && static_cast<unsigned char>(t[2]) == 0xa2) {
        line = trim(t.substr(3));
        return true;
    }
    line = t;
    return false;
}

std::optional<std::vector<std::string>> try_json_array(const std::string& raw) {
    std::string t = trim(raw);
    // Accept a fenced ```json block too.
    if (t.rfind("```", 0) == 0) {
        std::size_t start = t.find('\n');
        std::size_t end = t.rfind("```");
        if (start != std::string::npos && end > start) t = trim(t.substr(start + 1, end - start - 1));
    }
    if (t.empty() || t.front() != '[') return std::nullopt;
    json doc = json::parse(t, nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) return std::nullopt;
    std::vector<std::string> items;
    for (const auto& item : doc) {
        if (!item.is_string()) return std::nullopt;
        std::string s = trim(item.get<std::string>());
        if (!s.empty()) items.push_back(std::move(s));
    }
    return items;
}

}  // namespace

std::vector<std::string> Gateway::parse_questions(const std::string& raw) {
    if (auto strict = try_json_array(raw)) return *strict;
    std::vector<std::string> marked;
    std::vector<std::string> bare;
    for (auto& line : split_lines(raw)) {
        std::string item = line;
        bool had_marker = strip_marker(item);
        if (item.empty() || item.back() != '?') continue;
        if (had_marker) {
            marked.push_back(item);
        } else {
            bare.push_back(item);
        }
    }
    return marked.empty() ? bare : marked;
}

std::vector<std::string> Gateway::parse_list_items(const std::string& raw) {
    if (auto strict = try_json_array(raw)) return *strict;
    std::string t = trim(raw);
    if (t.empty() || to_lower(t) == "none") return {};
    std::vector<std::string> marked;
    std::vector<std::string> plain;
    for (auto& line : split_lines(raw)) {
        std::string item = line;
        bool had_marker = strip_marker(item);
        if (item.empty()) continue;
        (had_marker ? marked : plain).push_back(item);
    }
    if (!marked.empty()) return marked;
    // Single plain line: treat commas as separators ("fever, cough").
    if (plain.size() == 1 && plain[0].find(',') != std::string::npos) {
        std::vector<std::string> out;
        std::stringstream ss(plain[0]);
        std::string piece;
        while (std::getline(ss, piece, ',')) {
            std::string p = trim(piece);
            if (!p.empty()) out.push_back(std::move(p));
        }
        return out;
    }
    return plain;
}

int Gateway::parse_selection_index(const std::string& raw) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (std::isdigit(static_cast<unsigned char>(raw[i]))) {
            std::size_t end = i;
            while (end < raw.size() && std::isdigit(static_cast<unsigned char>(raw[end]))) ++end;
            int value = std::stoi(raw.substr(i, end - i));
            return value >= 1 ? value - 1 : -1;
        }
    }
    return -1;
}

std::optional<std::vector<std::pair<int, int>>> Gateway::parse_match_pairs(const std::string& raw) {
    std::size_t start = raw.find('{');
    if (start == std::string::npos) return std::nullopt;
    std::size_t end = raw.rfind('}');
    if (end == std::string::npos || end <= start) return std::nullopt;
    json doc = json::parse(raw.substr(start, end - start + 1), nullptr, false);
    if (doc.is_discarded() || !doc.contains("matches") || !doc["matches"].is_array()) {
        return std::nullopt;
    }
    std::vector<std::pair<int, int>> pairs;
    for (const auto& m : doc["matches"]) {
        if (!m.is_object() || !m.contains("truth") || !m.contains("generated")) return std::nullopt;
        if (!m["truth"].is_number_integer() || !m["generated"].is_number_integer()) return std::nullopt;
        int t = m["truth"].get<int>() - 1;
        int g = m["generated"].get<int>() - 1;
        if (t < 0 || g < 0) return std::nullopt;
        pairs.emplace_back(t, g);
    }
    return pairs;
}

Completion Gateway::parse_completion(PromptRole role, const std::string& raw) const {
    Completion c;
    c.role = role;
    c.raw_text = raw;
    switch (role) {
        case PromptRole::Generate:
        case PromptRole::Eliminate: {
            c.items = parse_questions(raw);
            c.parse_ok = !c.items.empty();
            break;
        }
        case PromptRole::Merge: {
            // First line ending in '?', else the whole trimmed text.
            auto questions = parse_questions(raw);
            if (!questions.empty()) {
                c.items = {questions.front()};
            } else {
                std::string t = trim(raw);
                if (!t.empty()) c.items = {t};
            }
            c.parse_ok = !c.items.empty();
            break;
        }
        case PromptRole::Extract: {
            c.items = parse_list_items(raw);
            c.parse_ok = true;  // an empty entity list is a valid answer
            break;
        }
        case PromptRole::RankEntity:
        case PromptRole::DdxBest:
        case PromptRole::DdxWorst: {
            c.items = parse_list_items(raw);
            c.parse_ok = !c.items.empty();
            break;
        }
        case PromptRole::RankPath: {
            c.selected_index = parse_selection_index(raw);
            c.parse_ok = c.selected_index >= 0;
            break;
        }
        case PromptRole::Judge: {
            auto pairs = parse_match_pairs(raw);
            if (pairs) {
                c.match_pairs = std::move(*pairs);
                c.parse_ok = true;
            }
            break;
        }
    }
    return c;
}

std::string Gateway::call_provider(const PromptRequest& request) {
    {
        std::unique_lock<std::mutex> lock(gate_mu_);
        gate_cv_.wait(lock, [&] { return in_flight_ < std::max(config_.max_in_flight, 1); });
        ++in_flight_;
    }
    struct Release {
        Gateway* g;
        ~Release() {
            {
                std::lock_guard<std::mutex> lock(g->gate_mu_);
                --g->in_flight_;
            }
            g->gate_cv_.notify_one();
        }
    } release{this};

    std::string last_error;
    for (int attempt = 0; attempt <= std::max(config_.retries, 0); ++attempt) {
        try {
            return provider_->complete_text(request);
        } catch (const TransportError& e) {
            last_error = e.what();
            if (attempt < config_.retries) {
                std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
            }
        }
    }
    throw GatewayError("provider failed after " + std::to_string(config_.retries + 1) +
                       " attempts: " + last_error);
}

Completion Gateway::complete(PromptRequest request) {
    if (request.model.empty()) {
        auto it = config_.role_models.find(prompt_role_name(request.role));
        request.model = it != config_.role_models.end() ? it->second : config_.model;
    }

    const std::string hash = request_hash(request);
    std::string raw;
    bool cache_hit = false;

    if (config_.cache_enabled && !config_.cache_dir.empty()) {
        std::lock_guard<std::mutex> lock(cache_mu_);
        fs::path file = fs::path(config_.cache_dir) / (hash + ".txt");
        if (fs::exists(file)) {
            std::ifstream in(file);
            std::stringstream buf;
            buf << in.rdbuf();
            raw = buf.str();
            cache_hit = true;
        }
    }
    if (!cache_hit) {
        raw = call_provider(request);
        if (config_.cache_enabled && !config_.cache_dir.empty()) {
            std::lock_guard<std::mutex> lock(cache_mu_);
            fs::create_directories(config_.cache_dir);
            std::ofstream out(fs::path(config_.cache_dir) / (hash + ".txt"));
            out << raw;
        }
    }

    Completion completion = parse_completion(request.role, raw);
    completion.model = request.model;
    completion.request_hash = hash;

    // Question-producing roles get one reformulation retry with an explicit
    // format instruction; rank/judge fall back at the call site instead.
    bool reformulable = request.role == PromptRole::Generate || request.role == PromptRole::Eliminate ||
                        request.role == PromptRole::Merge;
    if (!completion.parse_ok && reformulable) {
        PromptRequest retry = request;
        for (int attempt = 0; attempt < std::max(config_.reparse_attempts, 0); ++attempt) {
            retry.user_text +=
                "\n\nAnswer strictly as a numbered list, one question per line, each ending with a "
                "question mark.";
            std::string retry_raw = call_provider(retry);
            Completion retried = parse_completion(request.role, retry_raw);
            if (retried.parse_ok) {
                retried.model = request.model;
                retried.request_hash = request_hash(retry);
                completion = std::move(retried);
                break;
            }
        }
    }

    {
        std::lock_guard<std::mutex> lock(transcript_mu_);
        transcript_.push_back(CallRecord{request.role, hash, request.icl_examples.size(), cache_hit,
                                         completion.parse_ok, render_user_message(request)});
    }
    return completion;
}

std::vector<std::vector<double>> Gateway::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw GatewayError("embed requires a non-empty text list");
    std::string last_error;
    for (int attempt = 0; attempt <= std::max(config_.retries, 0); ++attempt) {
        try {
            return provider_->embed(texts);
        } catch (const TransportError& e) {
            last_error = e.what();
        }
    }
    throw GatewayError("embedding failed after retries: " + last_error);
}

std::vector<CallRecord> Gateway::transcript() const {
    std::lock_guard<std::mutex> lock(transcript_mu_);
    return transcript_;
}

void Gateway::clear_transcript() {
    std::lock_guard<std::mutex> lock(transcript_mu_);
    transcript_.clear();
}

}  // namespace kgf
