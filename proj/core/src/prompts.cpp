#include "kgf/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kgf/hashing.hpp"

namespace kgf {

namespace fs = std::filesystem;

const char* prompt_role_name(PromptRole role) {
    switch (role) {
        case PromptRole::Extract: return "extract";
        case PromptRole::Generate: return "generate";
        case PromptRole::RankEntity: return "rank-entity";
        case PromptRole::RankPath: return "rank-path";
        case PromptRole::DdxBest: return "ddx-best";
        case PromptRole::DdxWorst: return "ddx-worst";
        case PromptRole::Eliminate: return "eliminate";
        case PromptRole::Merge: return "merge";
        case PromptRole::Judge: return "judge";
    }
    return "generate";
}

PromptRole parse_prompt_role(const std::string& name) {
    static const std::map<std::string, PromptRole> table = {
        {"extract", PromptRole::Extract},   {"generate", PromptRole::Generate},
        {"rank-entity", PromptRole::RankEntity}, {"rank-path", PromptRole::RankPath},
        {"ddx-best", PromptRole::DdxBest},  {"ddx-worst", PromptRole::DdxWorst},
        {"eliminate", PromptRole::Eliminate}, {"merge", PromptRole::Merge},
        {"judge", PromptRole::Judge},
    };
    auto it = table.find(name);
    if (it == table.end()) throw std::invalid_argument("unknown prompt role: " + name);
    return it->second;
}

std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars) {
    std::string out = tmpl;
    for (const auto& [key, value] : vars) {
        std::string needle = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

namespace {

std::vector<PromptTemplate> builtin_templates() {
    std::vector<PromptTemplate> t;

    t.push_back({"extract", "v1",
                 "You are a clinical assistant extracting medical entities from a patient-doctor "
                 "conversation.",
                 "Read the conversation and list every distinct medical entity it mentions: symptoms, "
                 "findings, conditions, medications, and relevant exposures.\n\nConversation:\n{conversation}\n\n"
                 "Respond with one entity per line, each prefixed with '- '. If the conversation contains "
                 "no medical entities, respond with the single word NONE."});

    t.push_back({"generate", "v1",
                 "You are an experienced physician preparing follow-up questions for a patient intake "
                 "conversation. Ask clear, specific questions a clinician would need answered before "
                 "forming a diagnosis.",
                 "Conversation:\n{conversation}\n{knowledge}\nWrite the follow-up questions you would ask "
                 "this patient. {count_instruction}\nRespond with a numbered list, one question per line, "
                 "each ending with a question mark."});

    t.push_back({"rank-entity", "v1",
                 "You are a clinical assistant ranking medical concepts by relevance to a patient's "
                 "situation.",
                 "Conversation:\n{conversation}\n\nCandidate concepts:\n{candidates}\n\nRank the candidate "
                 "concepts from most to least clinically relevant for follow-up questioning in this "
                 "conversation. Respond with a numbered list of the concept names, most relevant first."});

    t.push_back({"rank-path", "v1",
                 "You are a clinical assistant choosing the knowledge-graph reasoning path that best fits "
                 "a patient's situation.",
                 "Conversation:\n{conversation}\n\nCandidate reasoning paths:\n{paths}\n\nSelect the single "
                 "path most relevant to this patient's situation. Respond with only the number of that "
                 "path."});

    t.push_back({"ddx-best", "v1",
                 "You are an experienced physician performing a differential diagnosis.",
                 "Conversation:\n{conversation}\n\nList the {n} most likely (best-case) candidate diagnoses "
                 "consistent with this presentation. Respond with a numbered list of diagnosis names "
                 "only."});

    t.push_back({"ddx-worst", "v1",
                 "You are an experienced physician performing a differential diagnosis.",
                 "Conversation:\n{conversation}\n\nList the {n} most serious (worst-case) candidate "
                 "diagnoses that must not be missed for this presentation. Respond with a numbered list of "
                 "diagnosis names only."});

    t.push_back({"eliminate", "v1",
                 "You are an experienced physician designing questions that confirm or rule out a specific "
                 "diagnosis.",
                 "Conversation:\n{conversation}\n\nCandidate diagnosis: {diagnosis}\n\nWrite {n} follow-up "
                 "questions whose answers would best confirm or rule out this diagnosis for this patient. "
                 "Respond with a numbered list, one question per line, each ending with a question mark."});

    t.push_back({"merge", "v1",
                 "You are consolidating overlapping clinical follow-up questions.",
                 "The following follow-up questions overlap:\n{questions}\n\nMerge them into one concise "
                 "question that preserves the clinical intent of all of them. Respond with the single "
                 "merged question only."});

    t.push_back({"judge", "v1",
                 "You are evaluating whether generated follow-up questions cover a ground-truth question "
                 "set. A ground-truth question is covered when some generated question asks for the same "
                 "information, even with different wording.",
                 "Generated questions:\n{generated}\n\nGround-truth questions:\n{truth}\n\nFor each "
                 "ground-truth question, decide whether any generated question covers it. Respond with "
                 "JSON of the form {\"matches\": [{\"truth\": <ground-truth number>, \"generated\": "
                 "<generated number>}, ...]} listing only the covered ground-truth questions."});

    return t;
}

}  // namespace

PromptSet PromptSet::defaults() {
    PromptSet set;
    for (auto& tmpl : builtin_templates()) {
        set.templates_[parse_prompt_role(tmpl.name)] = std::move(tmpl);
    }
    return set;
}

PromptSet PromptSet::from_directory(const std::string& dir) {
    PromptSet set = defaults();
    for (auto& [role, tmpl] : set.templates_) {
        fs::path file = fs::path(dir) / (tmpl.name + ".txt");
        if (!fs::exists(file)) continue;
        std::ifstream in(file);
        std::stringstream buf;
        buf << in.rdbuf();
        std::string content = buf.str();

        // Format: "version: <v>\n\n<system>\n---\n<user template>"
        std::size_t nl = content.find('\n');
        if (nl == std::string::npos || content.rfind("version:", 0) != 0) {
            throw std::runtime_error("bad prompt file (missing version line): " + file.string());
        }
        std::string version = content.substr(8, nl - 8);
        while (!version.empty() && version.front() == ' ') version.erase(version.begin());
        std::string rest = content.substr(nl + 1);
        if (!rest.empty() && rest.front() == '\n') rest.erase(rest.begin());
        std::size_t sep = rest.find("\n---\n");
        if (sep == std::string::npos) {
            throw std::runtime_error("bad prompt file (missing --- separator): " + file.string());
        }
        tmpl.version = version;
        tmpl.system_text = rest.substr(0, sep);
        tmpl.user_template = rest.substr(sep + 5);
        if (!tmpl.user_template.empty() && tmpl.user_template.back() == '\n') tmpl.user_template.pop_back();
    }
    return set;
}

const PromptTemplate& PromptSet::get(PromptRole role) const {
    auto it = templates_.find(role);
    if (it == templates_.end()) throw std::logic_error("no template registered for role");
    return it->second;
}

std::string PromptSet::set_hash() const {
    std::string blob;
    for (const auto& [role, tmpl] : templates_) {
        blob += tmpl.name;
        blob += '\x1f';
        blob += tmpl.version;
        blob += '\x1f';
        blob += tmpl.system_text;
        blob += '\x1f';
        blob += tmpl.user_template;
        blob += '\x1e';
    }
    return short_hash(blob);
}

void PromptSet::export_to_directory(const std::string& dir) const {
    fs::create_directories(dir);
    for (const auto& [role, tmpl] : templates_) {
        std::ofstream out(fs::path(dir) / (tmpl.name + ".txt"));
        out << "version: " << tmpl.version << "\n\n" << tmpl.system_text << "\n---\n"
            << tmpl.user_template << "\n";
    }
}

}  // namespace kgf
