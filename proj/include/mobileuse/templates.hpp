#pragma once

// Prompt templates, one per agent role. Files look like
//
//   [system]
//   You are ...
//   [user]
//   Instruction: {{instruction}}
//   ...
//
// Slots use {{slot_name}}. Each role accepts a fixed slot set; a template
// referencing any other slot is rejected at load time.

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mobileuse {

enum class AgentRole {
    operator_agent,
    explorer,
    progressor,
    action_reflector,
    trajectory_reflector,
    global_reflector,
    summary,
    critic,
};

std::string_view to_string(AgentRole role) noexcept;
const std::vector<AgentRole>& all_agent_roles();

// Slots a role's template may reference.
const std::set<std::string>& allowed_slots(AgentRole role);

struct PromptTemplate {
    AgentRole role = AgentRole::operator_agent;
    std::string system_text;
    std::string user_layout;

    // Parses the [system]/[user] file format and validates slots.
    // Throws Error{schema_error}.
    static PromptTemplate parse(AgentRole role, std::string_view text);

    std::set<std::string> referenced_slots() const;

    // Substitutes every {{slot}}; missing values render as "".
    std::string render_user(const std::map<std::string, std::string>& values) const;
};

class TemplateCatalog {
public:
    // Built-in defaults for every role.
    TemplateCatalog();

    // Defaults, overridden by any <role>.txt present in `dir`.
    static TemplateCatalog from_directory(const std::string& dir);

    const PromptTemplate& get(AgentRole role) const;
    void set(PromptTemplate tmpl);

    static std::string_view default_text(AgentRole role);

private:
    std::map<AgentRole, PromptTemplate> templates_;
};

}  // namespace mobileuse
