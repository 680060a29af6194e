#include "kgf/benchmark.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace kgf {

using json = nlohmann::json;

namespace {

Conversation parse_conversation(const json& doc, const std::string& instance_id) {
    Conversation conv;
    conv.instance_id = instance_id;
    const json& turns = doc.at("turns");
    for (const auto& t : turns) {
        Turn turn;
        std::string speaker = t.at("speaker").get<std::string>();
        if (speaker == "patient") {
            turn.speaker = Speaker::Patient;
        } else if (speaker == "doctor") {
            turn.speaker = Speaker::Doctor;
        } else {
            throw BenchmarkError(instance_id + ": unknown speaker '" + speaker + "'");
        }
        turn.text = t.at("text").get<std::string>();
        conv.turns.push_back(std::move(turn));
    }
    if (!conv.has_patient_turn()) {
        throw BenchmarkError(instance_id + ": conversation has no patient turn");
    }
    return conv;
}

}  // namespace

std::vector<BenchmarkInstance> load_benchmark(std::istream& in, BenchmarkDialect dialect) {
    std::vector<BenchmarkInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded()) {
            throw BenchmarkError("line " + std::to_string(line_no) + ": malformed JSON record");
        }
        BenchmarkInstance inst;
        try {
            inst.instance_id = doc.at("instance_id").get<std::string>();
        } catch (const json::exception&) {
            throw BenchmarkError("line " + std::to_string(line_no) + ": missing instance_id");
        }
        try {
            inst.conversation = parse_conversation(doc.at("conversation"), inst.instance_id);
            if (!doc.contains("truth") || !doc["truth"].is_array() || doc["truth"].empty()) {
                throw BenchmarkError(inst.instance_id + ": missing or empty truth list");
            }
            for (const auto& t : doc["truth"]) {
                std::string text;
                double weight = 1.0;
                if (t.is_string()) {
                    text = t.get<std::string>();
                } else {
                    text = t.at("text").get<std::string>();
                    if (dialect == BenchmarkDialect::Weighted) {
                        if (!t.contains("weight")) {
                            throw BenchmarkError(inst.instance_id + ": truth entry missing weight");
                        }
                        weight = t["weight"].get<double>();
                    } else {
                        weight = t.value("weight", 1.0);
                    }
                }
                if (text.empty()) throw BenchmarkError(inst.instance_id + ": empty truth question");
                if (weight <= 0.0) {
                    throw BenchmarkError(inst.instance_id + ": non-positive truth weight");
                }
                inst.truth.emplace_back(std::move(text), weight);
            }
            if (doc.contains("theme") && doc["theme"].is_string()) {
                inst.theme = doc["theme"].get<std::string>();
            }
        } catch (const json::exception& e) {
            throw BenchmarkError(inst.instance_id.empty()
                                     ? "line " + std::to_string(line_no) + ": " + e.what()
                                     : inst.instance_id + ": " + e.what());
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<BenchmarkInstance> load_benchmark_file(const std::string& path, BenchmarkDialect dialect) {
    std::ifstream in(path);
    if (!in) throw BenchmarkError("cannot open benchmark file: " + path);
    return load_benchmark(in, dialect);
}

std::vector<Conversation> load_conversations(std::istream& in) {
    std::vector<Conversation> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded()) {
            throw BenchmarkError("line " + std::to_string(line_no) + ": malformed JSON record");
        }
        try {
            std::string id = doc.at("instance_id").get<std::string>();
            out.push_back(parse_conversation(doc, id));
        } catch (const json::exception& e) {
            throw BenchmarkError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<Conversation> load_conversations_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BenchmarkError("cannot open conversations file: " + path);
    return load_conversations(in);
}

}  // namespace kgf
