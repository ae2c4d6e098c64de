#include "looptool/templates.hpp"

namespace looptool {

std::string render_context(const MessageList& context) {
    if (context.empty()) return "(empty)";
    std::string out;
    for (const auto& m : context) {
        if (!out.empty()) out += '\n';
        out += to_string(m.role);
        out += ": ";
        out += m.text;
    }
    return out;
}

std::string render_instruction(const PromptTemplate& tmpl, const ToolSet& tools,
                               const std::string& current_time) {
    tmpl.require_slots({"current_time", "tool_sets"});
    return tmpl.render({{"current_time", current_time}, {"tool_sets", to_json(tools).dump(2)}});
}

}  // namespace looptool
