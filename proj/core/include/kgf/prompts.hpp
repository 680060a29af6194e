#pragma once

#include <map>
#include <string>
#include <vector>

namespace kgf {

enum class PromptRole {
    Extract,
    Generate,
    RankEntity,
    RankPath,
    DdxBest,
    DdxWorst,
    Eliminate,
    Merge,
    Judge,
};

const char* prompt_role_name(PromptRole role);
PromptRole parse_prompt_role(const std::string& name);

struct PromptTemplate {
    std::string name;
    std::string version;
    std::string system_text;
    std::string user_template;  // {placeholder} substitution
};

// Substitutes {key} occurrences for every entry of vars; unknown braces are
// left untouched.
std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& vars);

// The active set of role templates. Defaults are compiled in; a directory of
// <role>.txt files (first line "version: <v>", blank line, system text,
// "---" separator, user template) overrides individual roles.
class PromptSet {
public:
    static PromptSet defaults();
    static PromptSet from_directory(const std::string& dir);

    const PromptTemplate& get(PromptRole role) const;

    // Hash over every active template; stamped into run metadata so output
    // files pin the exact prompt wording they were produced with.
    std::string set_hash() const;

    // Writes one <role>.txt per template, in the override format.
    void export_to_directory(const std::string& dir) const;

private:
    std::map<PromptRole, PromptTemplate> templates_;
};

}  // namespace kgf
